//! Structure-breaking controls: category reassignment and query action reordering.
//!
//! Both controls draw from a ChaCha8 stream seeded by `derive_seed(seed, id)`,
//! so the outcome for a problem does not depend on execution order. The gold
//! label is never touched.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BongardProblem, SUPPORT_PER_CLASS};
use crate::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    Categories,
    Sequence,
}

impl FromStr for PerturbMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "categories" | "cat" => Ok(PerturbMode::Categories),
            "sequence" | "seq" => Ok(PerturbMode::Sequence),
            _ => Err(format!("unknown perturbation mode {s:?}")),
        }
    }
}

impl fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbMode::Categories => "categories",
            PerturbMode::Sequence => "sequence",
        })
    }
}

fn rng_for(p: &BongardProblem, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &p.id))
}

/// Pools the 12 support images and splits them 6/6 uniformly at random.
pub fn shuffle_categories(p: &BongardProblem, seed: u64) -> BongardProblem {
    let mut pool: Vec<_> = p.supports().cloned().collect();
    pool.shuffle(&mut rng_for(p, seed));
    let negatives = pool.split_off(SUPPORT_PER_CLASS.min(pool.len()));
    BongardProblem {
        positives: pool,
        negatives,
        ..p.clone()
    }
}

/// Permutes the action order inside every stroke of the query.
pub fn shuffle_query_sequence(p: &BongardProblem, seed: u64) -> BongardProblem {
    let mut rng = rng_for(p, seed);
    let mut out = p.clone();
    for shape in out.query.program.shapes_mut() {
        shape.actions_mut().shuffle(&mut rng);
    }
    out
}

pub fn apply(p: &BongardProblem, mode: PerturbMode, seed: u64) -> BongardProblem {
    match mode {
        PerturbMode::Categories => shuffle_categories(p, seed),
        PerturbMode::Sequence => shuffle_query_sequence(p, seed),
    }
}
