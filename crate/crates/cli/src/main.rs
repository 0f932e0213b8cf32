use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use bongard_cg::analysis::{self, ReportFormat, ReportInput, TableKind};
use bongard_cg::dataset::{self, QueryPolicy, SubsetSpec};
use bongard_cg::describe::render_description;
use bongard_cg::grammar::{parse_action, BongardImage, OneStrokeShape};
use bongard_cg::harness::{self, RunSpec};
use bongard_cg::perturb::{self, PerturbMode};
use bongard_cg::prompt::{self, program_literal, Condition, ImageStore};
use bongard_cg::render::render_svg;
use bongard_cg::{BongardProblem, Corpus, Split};

#[derive(Parser)]
#[command(name = "bongard-cg", version, about = "Symbolic Bongard-LOGO evaluation pipeline")]
struct Cli {
    /// Response cache directory for `run` (overrides the config file).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an upstream action-program distribution into a canonical corpus.
    Import {
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a seeded evaluation subset and write its manifest.
    Sample {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        per_split: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse action tokens and print them as a program literal and a description.
    Parse {
        #[arg(required = true)]
        tokens: Vec<String>,
    },
    /// Print every image of a problem as a program literal and a description.
    Describe {
        problem_id: String,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write one SVG file per image of a problem.
    RenderSvg {
        problem_id: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        canvas: u32,
        #[arg(long, default_value_t = 100.0)]
        scale: f64,
    },
    /// Print a perturbed problem as JSON.
    Perturb {
        problem_id: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        mode: PerturbMode,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "held-out-pos")]
        query_policy: QueryPolicy,
    },
    /// Print the exact prompt bundle for a problem under a condition.
    Prompt {
        problem_id: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        condition: Condition,
        #[arg(long, default_value = "held-out-pos")]
        query_policy: QueryPolicy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Print the bundle as JSON instead of delimited sections.
        #[arg(long)]
        json: bool,
    },
    /// Execute a run described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Ignore the response cache.
        #[arg(long)]
        no_cache: bool,
    },
    /// Aggregate record logs (or the bundled published tables) into reports.
    Report {
        #[arg(long, num_args = 1..)]
        logs: Vec<PathBuf>,
        /// Directory of published per-model CSV tables to report on instead of logs.
        #[arg(long)]
        published: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "table1,fig2,grounded,shuffle,asymmetry")]
        tables: Vec<String>,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn load_problem(corpus: &Path, id: &str, policy: QueryPolicy, seed: u64) -> Result<BongardProblem> {
    let corpus = Corpus::load(corpus).with_context(|| format!("loading corpus {}", corpus.display()))?;
    Ok(dataset::select_query(corpus.get(id)?, policy, seed)?)
}

fn cmd_import(root: &Path, out: &Path) -> Result<()> {
    let (corpus, report) = dataset::import_upstream(root)?;
    corpus.save(out)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    for split in Split::ALL {
        println!("{split}\t{}", report.per_split.get(&split).copied().unwrap_or(0));
    }
    println!("total\t{}", corpus.len());
    Ok(())
}

fn cmd_sample(corpus: &Path, per_split: usize, seed: u64, out: &Path) -> Result<()> {
    let corpus = Corpus::load(corpus)?;
    let manifest = dataset::sample_subset(&corpus, &SubsetSpec::new(per_split, seed))?;
    manifest.save(out)?;
    println!("{} ids written to {}", manifest.ids.len(), out.display());
    Ok(())
}

fn cmd_parse(tokens: &[String]) -> Result<()> {
    let actions = tokens
        .iter()
        .map(|t| parse_action(t).with_context(|| format!("token {t:?}")))
        .collect::<Result<Vec<_>>>()?;
    let image = BongardImage::new(vec![OneStrokeShape::new(actions)?])?;
    println!("{}", program_literal(&image));
    println!();
    println!("{}", render_description(&image, 1));
    Ok(())
}

fn cmd_describe(corpus: &Path, id: &str) -> Result<()> {
    let corpus = Corpus::load(corpus)?;
    let raw = corpus.get(id)?;
    let mut figure = 0;
    for (class, images) in [("pos", &raw.pos), ("neg", &raw.neg)] {
        for (i, img) in images.iter().enumerate() {
            figure += 1;
            println!("# {class} {i}");
            println!("{}", program_literal(img));
            println!("{}", render_description(img, figure));
            println!();
        }
    }
    Ok(())
}

fn cmd_render(corpus: &Path, id: &str, out: &Path, canvas: u32, scale: f64) -> Result<()> {
    let corpus = Corpus::load(corpus)?;
    let raw = corpus.get(id)?;
    fs::create_dir_all(out)?;
    for (class, images) in [("pos", &raw.pos), ("neg", &raw.neg)] {
        for (i, img) in images.iter().enumerate() {
            let svg = render_svg(img, canvas, scale)?;
            for w in &svg.warnings {
                log::warn!("{id} {class} {i}: {w}");
            }
            let path = out.join(format!("{id}_{class}_{i}.svg"));
            fs::write(&path, svg.svg).with_context(|| path.display().to_string())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn cmd_perturb(corpus: &Path, id: &str, mode: PerturbMode, seed: u64, policy: QueryPolicy) -> Result<()> {
    let p = load_problem(corpus, id, policy, seed)?;
    let q = perturb::apply(&p, mode, seed);
    println!("{}", serde_json::to_string_pretty(&q)?);
    Ok(())
}

fn cmd_prompt(
    corpus: &Path,
    id: &str,
    condition: &Condition,
    policy: QueryPolicy,
    seed: u64,
    images: Option<PathBuf>,
    json: bool,
) -> Result<()> {
    let p = load_problem(corpus, id, policy, seed)?;
    let store = images.map(ImageStore::new);
    let bundle = prompt::build_bundle(&condition.prepare(&p), condition, store.as_ref())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&bundle)?);
        return Ok(());
    }
    println!("=== SYSTEM ===");
    println!("{}", bundle.system.trim_end_matches('\n'));
    println!("=== USER ===");
    println!("{}", bundle.user);
    println!("=== IMAGES ===");
    for img in &bundle.images {
        println!("{}\t{}", img.label, img.path.display());
    }
    Ok(())
}

fn cmd_run(config: &Path, cache_dir: Option<PathBuf>, no_cache: bool) -> Result<()> {
    let mut spec = RunSpec::from_file(config)?;
    if let Some(dir) = cache_dir {
        spec.backend.cache_dir = Some(dir);
    }
    spec.backend.no_cache |= no_cache;
    let summary = harness::run(&spec)?;
    println!("{summary}");
    Ok(())
}

fn cmd_report(
    logs: &[PathBuf],
    published: Option<&Path>,
    tables: &[String],
    format: ReportFormat,
    out: &Path,
) -> Result<()> {
    let kinds = tables
        .iter()
        .map(|t| t.parse::<TableKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let input = match (logs.is_empty(), published) {
        (false, None) => {
            let mut records = Vec::new();
            for path in logs {
                if !path.exists() {
                    bail!("log file {} does not exist", path.display());
                }
                records.extend(harness::read_records(path)?);
            }
            ReportInput::from_records(records)
        }
        (true, Some(dir)) => {
            let csvs: Vec<PathBuf> = ["per_model_results.csv", "grounded_results.csv", "shuffle_results.csv"]
                .iter()
                .map(|f| dir.join(f))
                .filter(|p| p.exists())
                .collect();
            if csvs.is_empty() {
                bail!("no published result tables under {}", dir.display());
            }
            let capacity_path = dir.join("capacity_gains.csv");
            ReportInput {
                scores: analysis::ModelScores::load_csv(&csvs)?,
                records: Vec::new(),
                capacity: if capacity_path.exists() {
                    analysis::load_capacity_csv(&capacity_path)?
                } else {
                    Vec::new()
                },
            }
        }
        (false, Some(_)) => bail!("give either --logs or --published, not both"),
        (true, None) => bail!("give --logs or --published"),
    };
    for path in analysis::emit_report(&input, &kinds, format, out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Import { root, out } => cmd_import(&root, &out),
        Command::Sample {
            corpus,
            per_split,
            seed,
            out,
        } => cmd_sample(&corpus, per_split, seed, &out),
        Command::Parse { tokens } => cmd_parse(&tokens),
        Command::Describe { problem_id, corpus } => cmd_describe(&corpus, &problem_id),
        Command::RenderSvg {
            problem_id,
            corpus,
            out,
            canvas,
            scale,
        } => cmd_render(&corpus, &problem_id, &out, canvas, scale),
        Command::Perturb {
            problem_id,
            corpus,
            mode,
            seed,
            query_policy,
        } => cmd_perturb(&corpus, &problem_id, mode, seed, query_policy),
        Command::Prompt {
            problem_id,
            corpus,
            condition,
            query_policy,
            seed,
            images,
            json,
        } => cmd_prompt(&corpus, &problem_id, &condition, query_policy, seed, images, json),
        Command::Run { config, no_cache } => cmd_run(&config, cli.cache_dir, no_cache),
        Command::Report {
            logs,
            published,
            tables,
            format,
            out,
        } => cmd_report(&logs, published.as_deref(), &tables, format, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
