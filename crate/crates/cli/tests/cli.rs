use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus")
}

fn published() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/published")
}

fn bcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bongard-cg")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bcg(&[]).status.code(), Some(2));
    assert_eq!(bcg(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bcg(&["sample", "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let o = bcg(&["describe", "nope", "--corpus", corpus().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert_eq!(bcg(&["parse", "line_normal_1.500-0.500"]).status.code(), Some(1));
    assert_eq!(bcg(&["run", "--config", "/definitely/missing.toml"]).status.code(), Some(1));
    assert_eq!(bcg(&["report", "--tables", "table1"]).status.code(), Some(1));
}

#[test]
fn parse_prints_literal_and_description() {
    let o = bcg(&["parse", "line_normal_0.500-0.875", "arc_circle_0.300_0.625-0.500"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("[['line_normal_0.500-0.875', 'arc_circle_0.300_0.625-0.500']]"), "{out}");
    assert!(out.contains("To draw figure 1, follow these steps:"));
    assert!(out.contains("turn left by 135.0 degrees"));
    assert!(out.contains("sweeping 90.0 degrees"));
    assert!(out.trim_end().ends_with("The figure is now complete."));
}

#[test]
fn perturb_is_seed_deterministic() {
    let c = corpus();
    let args = ["perturb", "ff_nact4_0001", "--corpus", c.to_str().unwrap(), "--mode", "sequence", "--seed", "4"];
    let a = bcg(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&bcg(&args)));
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["id"], "ff_nact4_0001");
}

#[test]
fn prompt_sections() {
    let c = corpus();
    let o = bcg(&["prompt", "bd_worked_example", "--corpus", c.to_str().unwrap(), "--condition", "ad,concept"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let sys = out.find("=== SYSTEM ===").unwrap();
    let user = out.find("=== USER ===").unwrap();
    let images = out.find("=== IMAGES ===").unwrap();
    assert!(sys < user && user < images);
    assert!(out[user..].contains("POSITIVE SET (6 descriptions):"));
}

#[test]
fn report_from_published_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = bcg(&[
        "report",
        "--published",
        published().to_str().unwrap(),
        "--tables",
        "table1,shuffle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t1 = fs::read_to_string(out.join("table1.md")).unwrap();
    assert!(t1.contains("| C-G (AP) | 78.1 | 68.8 | 61.0 | 12 |"), "{t1}");
    let sh = fs::read_to_string(out.join("shuffle.md")).unwrap();
    assert!(sh.contains("59.9 ± 3.3") || sh.contains("59.9±3.3"), "{sh}");
}

#[test]
fn render_svg_writes_one_file_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let o = bcg(&["render-svg", "ff_nact4_0001", "--corpus", c.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 14);
}
