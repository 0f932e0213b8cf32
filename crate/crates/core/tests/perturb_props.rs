use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use bongard_cg::dataset::{select_query, ProblemImage, QueryPolicy};
use bongard_cg::perturb::{apply, shuffle_categories, shuffle_query_sequence, PerturbMode};
use bongard_cg::{BongardProblem, Corpus};
use proptest::prelude::*;

const TRIALS: u64 = 1000;

fn fixture_problems() -> &'static [BongardProblem] {
    static PROBLEMS: OnceLock<Vec<BongardProblem>> = OnceLock::new();
    PROBLEMS.get_or_init(load_problems)
}

fn load_problems() -> Vec<BongardProblem> {
    let corpus = Corpus::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")).unwrap();
    let mut out = Vec::new();
    for raw in corpus.problems() {
        for policy in [QueryPolicy::HeldOutPos, QueryPolicy::HeldOutNeg] {
            out.push(select_query(raw, policy, 0).unwrap());
        }
    }
    assert_eq!(out.len(), 16);
    out
}

fn multiset<'a>(images: impl Iterator<Item = &'a ProblemImage>) -> BTreeMap<Vec<Vec<String>>, usize> {
    let mut m = BTreeMap::new();
    for img in images {
        *m.entry(bongard_cg::grammar::serialize_image(&img.program)).or_insert(0) += 1;
    }
    m
}

fn shape_token_multisets(p: &BongardProblem) -> Vec<BTreeMap<String, usize>> {
    p.query
        .program
        .shapes()
        .iter()
        .map(|s| {
            let mut m = BTreeMap::new();
            for a in s.actions() {
                *m.entry(a.to_string()).or_insert(0) += 1;
            }
            m
        })
        .collect()
}

#[test]
fn category_shuffle_conserves_the_support_pool() {
    for p in fixture_problems() {
        let pool = multiset(p.supports());
        for seed in 0..TRIALS {
            let q = shuffle_categories(p, seed);
            assert_eq!(q.positives.len(), 6);
            assert_eq!(q.negatives.len(), 6);
            assert_eq!(multiset(q.supports()), pool, "{} seed {seed}", p.id);
            assert_eq!(q.query, p.query);
            assert_eq!(q.gold, p.gold);
            assert_eq!(q.concept, p.concept);
            assert_eq!(q, shuffle_categories(p, seed));
        }
    }
}

#[test]
fn sequence_shuffle_touches_only_the_query_order() {
    for p in fixture_problems() {
        let shapes = shape_token_multisets(p);
        for seed in 0..TRIALS {
            let q = shuffle_query_sequence(p, seed);
            assert_eq!(q.positives, p.positives);
            assert_eq!(q.negatives, p.negatives);
            assert_eq!(q.gold, p.gold);
            assert_eq!(q.query.origin, p.query.origin);
            assert_eq!(shape_token_multisets(&q), shapes, "{} seed {seed}", p.id);
            assert_eq!(q, shuffle_query_sequence(p, seed));
        }
    }
}

#[test]
fn sequence_shuffle_actually_reorders_long_queries() {
    let p = fixture_problems().iter().find(|p| p.query.program.action_count() >= 8).unwrap();
    let changed = (0..100).filter(|&s| shuffle_query_sequence(p, s).query != p.query).count();
    assert!(changed > 90, "{changed}");
}

#[test]
fn category_shuffle_mixes_classes() {
    let p = &fixture_problems()[0];
    let original = multiset(p.positives.iter());
    let moved = (0..200)
        .filter(|&s| multiset(shuffle_categories(p, s).positives.iter()) != original)
        .count();
    assert!(moved > 190, "{moved}");
}

proptest! {
    #[test]
    fn apply_dispatches_by_mode(seed in any::<u64>(), which in 0usize..16) {
        let p = &fixture_problems()[which];
        prop_assert_eq!(apply(p, PerturbMode::Categories, seed), shuffle_categories(p, seed));
        prop_assert_eq!(apply(p, PerturbMode::Sequence, seed), shuffle_query_sequence(p, seed));
    }
}
