//! Symbolic evaluation pipeline for Bongard-LOGO problems.
//!
//! Action programs are parsed into typed values ([`grammar`]), rendered as
//! step-by-step English ([`describe`]) or SVG ([`render`]), assembled into
//! prompts ([`prompt`]) and sent to an answer source ([`backend`]). The
//! [`harness`] writes one JSONL record per problem and [`analysis`] turns
//! record logs into accuracy tables and statistics.

#![forbid(unsafe_code)]

pub mod analysis;
pub mod backend;
pub mod dataset;
pub mod describe;
pub mod grammar;
pub mod harness;
pub mod perturb;
pub mod prompt;
pub mod render;
pub mod response;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use dataset::{BongardProblem, Corpus, Split};
pub use grammar::{BasicAction, BongardImage, OneStrokeShape};
pub use prompt::{Condition, PromptBundle};

/// Class of a support or query image, and the answer a model gives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pos => "pos",
            Label::Neg => "neg",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Formats `x` with `decimals` fraction digits, rounding half away from zero.
///
/// The value is first printed with ten fraction digits so that binary noise
/// such as `62.349999999999994` is treated as the decimal `62.35`.
pub fn format_fixed(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let text = format!("{:.10}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(decimals))
        .map(|b| b - b'0')
        .collect();
    let next = frac_part.as_bytes().get(decimals).map_or(0, |b| b - b'0');
    if next >= 5 {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let int_len = digits.len() - decimals;
    let mut out = String::with_capacity(digits.len() + 2);
    if x < 0.0 && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.extend(digits[..int_len].iter().map(|d| char::from(b'0' + d)));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[int_len..].iter().map(|d| char::from(b'0' + d)));
    }
    out
}

/// Rounds `x` half away from zero at `decimals` fraction digits.
pub fn round_half_away(x: f64, decimals: usize) -> f64 {
    format_fixed(x, decimals).parse().unwrap_or(x)
}

/// Derives a stable 64-bit seed from a run seed and a key such as a problem id.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
