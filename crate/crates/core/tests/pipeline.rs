use std::fs;
use std::path::PathBuf;

use bongard_cg::dataset::{import_upstream, sample_subset, select_query, QueryPolicy, SubsetManifest, SubsetSpec};
use bongard_cg::prompt::{
    build_bundle, templates_match_dir, Condition, ImageStore, Perturbation, PromptError, Representation,
};
use bongard_cg::render::render_svg;
use bongard_cg::{Corpus, Label, Split};
use proptest::prelude::*;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

fn corpus() -> Corpus {
    Corpus::load(&corpus_dir()).unwrap()
}

#[test]
fn fixture_corpus_shape() {
    let c = corpus();
    assert_eq!(c.len(), 8);
    for split in Split::ALL {
        assert_eq!(c.counts()[&split], 2, "{split}");
    }
    for raw in c.problems() {
        assert_eq!((raw.pos.len(), raw.neg.len()), (7, 7), "{}", raw.id);
        assert!(raw.concept.is_some());
    }
}

#[test]
fn canonical_corpus_survives_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    c.save(dir.path()).unwrap();
    let again = Corpus::load(dir.path()).unwrap();
    assert_eq!(again, c);
    for split in Split::ALL {
        let a = fs::read_to_string(corpus_dir().join(split.file_name())).unwrap();
        let b = fs::read_to_string(dir.path().join(split.file_name())).unwrap();
        assert_eq!(serde_json::from_str::<serde_json::Value>(&a).unwrap(), serde_json::from_str::<serde_json::Value>(&b).unwrap());
    }
}

#[test]
fn upstream_layout_import() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let c = corpus();
    for (file, split) in [("ff", Split::Ff), ("bd", Split::Bd)] {
        let mut programs = serde_json::Map::new();
        for raw in c.problems().filter(|p| p.split == split) {
            let side = |imgs: &Vec<bongard_cg::BongardImage>| {
                serde_json::to_value(imgs.iter().map(bongard_cg::grammar::serialize_image).collect::<Vec<_>>()).unwrap()
            };
            programs.insert(raw.id.clone(), serde_json::json!([side(&raw.pos), side(&raw.neg)]));
        }
        let sub = root.join(file);
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join(format!("{file}_action_programs.json")), serde_json::to_string(&programs).unwrap()).unwrap();
    }
    let (imported, report) = import_upstream(root).unwrap();
    assert_eq!(imported.len(), 4);
    assert_eq!(report.per_split.get(&Split::Ff), Some(&2));
    for raw in imported.problems() {
        let orig = c.get(&raw.id).unwrap();
        assert_eq!((&raw.pos, &raw.neg, raw.split), (&orig.pos, &orig.neg, orig.split));
    }
}

#[test]
fn query_policies() {
    let c = corpus();
    let raw = c.get("bd_square_vs_triangle_0001").unwrap();
    let pos = select_query(raw, QueryPolicy::HeldOutPos, 1).unwrap();
    assert_eq!(pos.gold, Label::Pos);
    assert_eq!(pos.query.program, raw.pos[6]);
    assert_eq!(pos.positives.len(), 6);
    let neg = select_query(raw, QueryPolicy::HeldOutNeg, 1).unwrap();
    assert_eq!(neg.query.program, raw.neg[6]);
    let golds: Vec<Label> = (0..64).map(|s| select_query(raw, QueryPolicy::Coin, s).unwrap().gold).collect();
    assert!(golds.contains(&Label::Pos) && golds.contains(&Label::Neg));
}

#[test]
fn manifest_round_trip_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let m = sample_subset(&c, &SubsetSpec::new(1, 3)).unwrap();
    assert_eq!(m.ids.len(), 4);
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    assert_eq!(SubsetManifest::load(&path).unwrap(), m);
    assert!(sample_subset(&c, &SubsetSpec::new(3, 3)).is_err());
}

#[test]
fn every_text_condition_builds_for_every_problem() {
    let c = corpus();
    let conditions = [
        "ap", "ad", "ap,concept", "ad,concept", "ap,minimal", "ad,minimal", "ap,shuffle-cat:4", "ap,shuffle-seq:4",
    ];
    for raw in c.problems() {
        let p = select_query(raw, QueryPolicy::Coin, 2).unwrap();
        for spec in conditions {
            let cond: Condition = spec.parse().unwrap();
            let b = build_bundle(&cond.prepare(&p), &cond, None).unwrap();
            assert!(b.images.is_empty());
            assert_eq!(b.system.contains(bongard_cg::prompt::CONCEPT_PREFIX), cond.concept, "{spec}");
            assert!(b.user.contains("QUERY (1 description):"));
        }
    }
}

#[test]
fn image_conditions_need_files() {
    let c = corpus();
    let p = select_query(c.get("ff_nact4_0001").unwrap(), QueryPolicy::HeldOutNeg, 0).unwrap();
    let image: Condition = "image".parse().unwrap();
    let grounded: Condition = "ap,grounded".parse().unwrap();
    assert!(matches!(build_bundle(&p, &image, None), Err(PromptError::NoImageStore(_))));

    let dir = tempfile::tempdir().unwrap();
    let store = ImageStore::new(dir.path());
    assert!(matches!(build_bundle(&p, &grounded, Some(&store)), Err(PromptError::ImageFileMissing(_))));
    for img in p.supports().chain(std::iter::once(&p.query)) {
        let path = store.path_for(&p.id, img);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, b"png").unwrap();
    }
    let g = build_bundle(&p, &grounded, Some(&store)).unwrap();
    assert_eq!(g.images.len(), 1);
    assert_eq!(g.images[0].path, store.path_for(&p.id, &p.query));
    let v = build_bundle(&p, &image, Some(&store)).unwrap();
    assert_eq!(v.images.len(), 13);
    assert_eq!(v.images[12].label, "query");
    assert!(v.user.contains("[Image 13]"));
}

#[test]
fn shipped_templates_match_compiled_copies() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("templates/v1");
    assert!(templates_match_dir(&dir).unwrap());
}

#[test]
fn every_fixture_image_renders() {
    for raw in corpus().problems() {
        for img in raw.pos.iter().chain(&raw.neg) {
            let out = render_svg(img, 512, 60.0).unwrap();
            assert!(out.svg.starts_with("<?xml"));
            assert!(out.svg.trim_end().ends_with("</svg>"));
            assert_eq!(out.svg.matches("class=\"shape\"").count(), img.shapes().len());
            let (x0, y0, x1, y1) = out.bounding_box;
            assert!(x0 <= x1 && y0 <= y1);
            assert_eq!(render_svg(img, 512, 60.0).unwrap().svg, out.svg);
        }
    }
}

fn condition() -> impl Strategy<Value = Condition> {
    let rep = prop_oneof![Just(Representation::Ap), Just(Representation::Ad)];
    let pert = prop_oneof![
        Just(Perturbation::None),
        any::<u64>().prop_map(|seed| Perturbation::Categories { seed }),
        any::<u64>().prop_map(|seed| Perturbation::QuerySequence { seed }),
    ];
    (rep, any::<bool>(), any::<bool>(), any::<bool>(), pert).prop_map(|(r, concept, minimal, grounded, p)| {
        let mut c = Condition::new(r).perturbed(p);
        if concept {
            c = c.with_concept();
        }
        if minimal {
            c = c.minimal();
        }
        if grounded {
            c = c.grounded();
        }
        c
    })
}

proptest! {
    #[test]
    fn fingerprints_identify_conditions(c in condition()) {
        let fp = c.fingerprint();
        prop_assert_eq!(fp.parse::<Condition>().unwrap(), c);
    }

    #[test]
    fn subsets_are_seed_deterministic(seed in any::<u64>()) {
        let c = corpus();
        let a = sample_subset(&c, &SubsetSpec::new(2, seed)).unwrap();
        prop_assert_eq!(&a, &sample_subset(&c, &SubsetSpec::new(2, seed)).unwrap());
        let one = sample_subset(&c, &SubsetSpec::new(1, seed)).unwrap();
        prop_assert!(one.ids.iter().all(|id| a.ids.contains(id)));
    }
}
