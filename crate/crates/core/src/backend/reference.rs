//! Deterministic offline reasoner over action-token sets.
//!
//! The verdict is the class whose support images have the higher mean
//! Jaccard similarity to the query; ties go to `neg`. Order of actions is
//! ignored on purpose, so sequence shuffling cannot change the verdict.

use std::collections::BTreeSet;
use std::time::Instant;

use serde_json::json;

use super::{AnswerSource, BackendError, RawAnswer};
use crate::dataset::BongardProblem;
use crate::describe::step_clause;
use crate::grammar::BongardImage;
use crate::prompt::{PromptBundle, Representation};
use crate::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceVerdict {
    pub label: Label,
    pub mean_pos: f64,
    pub mean_neg: f64,
}

impl ReferenceVerdict {
    pub fn score(&self) -> f64 {
        self.mean_pos - self.mean_neg
    }
}

/// |a ∩ b| / |a ∪ b|, and 0 when both sets are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn mean_similarity(query: &BTreeSet<String>, support: &[BTreeSet<String>]) -> f64 {
    if support.is_empty() {
        return 0.0;
    }
    support.iter().map(|s| jaccard(query, s)).sum::<f64>() / support.len() as f64
}

fn verdict(query: &BTreeSet<String>, pos: &[BTreeSet<String>], neg: &[BTreeSet<String>]) -> ReferenceVerdict {
    let mean_pos = mean_similarity(query, pos);
    let mean_neg = mean_similarity(query, neg);
    ReferenceVerdict {
        label: if mean_pos > mean_neg { Label::Pos } else { Label::Neg },
        mean_pos,
        mean_neg,
    }
}

fn token_set(image: &BongardImage, representation: Representation) -> BTreeSet<String> {
    match representation {
        Representation::Ad => image.actions().map(step_clause).collect(),
        _ => image.tokens().into_iter().collect(),
    }
}

/// AP compares action tokens; AD compares step sentences.
pub fn reference_classify(p: &BongardProblem, representation: Representation) -> ReferenceVerdict {
    let sets = |imgs: &[crate::dataset::ProblemImage]| -> Vec<BTreeSet<String>> {
        imgs.iter().map(|i| token_set(&i.program, representation)).collect()
    };
    verdict(
        &token_set(&p.query.program, representation),
        &sets(&p.positives),
        &sets(&p.negatives),
    )
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Pos,
    Neg,
    Query,
}

/// Recovers per-image token sets from a user prompt and classifies.
pub fn reference_classify_prompt(user: &str) -> Result<ReferenceVerdict, String> {
    let mut section = Section::None;
    let mut pos: Vec<BTreeSet<String>> = Vec::new();
    let mut neg: Vec<BTreeSet<String>> = Vec::new();
    let mut query: Vec<BTreeSet<String>> = Vec::new();
    let mut current: Option<BTreeSet<String>> = None;

    let flush = |section: Section,
                 set: BTreeSet<String>,
                 pos: &mut Vec<BTreeSet<String>>,
                 neg: &mut Vec<BTreeSet<String>>,
                 query: &mut Vec<BTreeSet<String>>| match section {
        Section::Pos => pos.push(set),
        Section::Neg => neg.push(set),
        Section::Query => query.push(set),
        Section::None => {}
    };

    for line in user.lines() {
        let line = line.trim_end();
        let next = if line.starts_with("POSITIVE SET") {
            Some(Section::Pos)
        } else if line.starts_with("NEGATIVE SET") {
            Some(Section::Neg)
        } else if line.starts_with("QUERY") {
            Some(Section::Query)
        } else {
            None
        };
        if let Some(next) = next {
            if let Some(set) = current.take() {
                flush(section, set, &mut pos, &mut neg, &mut query);
            }
            section = next;
            continue;
        }
        if section == Section::None {
            continue;
        }
        if line.starts_with("[Image ") {
            return Err("image-only entries carry no symbolic content".into());
        }
        if line.starts_with("[[") {
            let tokens: BTreeSet<String> = line
                .split('\'')
                .skip(1)
                .step_by(2)
                .map(str::to_string)
                .collect();
            flush(section, tokens, &mut pos, &mut neg, &mut query);
        } else if line.starts_with("To draw figure ") {
            if let Some(set) = current.take() {
                flush(section, set, &mut pos, &mut neg, &mut query);
            }
            current = Some(BTreeSet::new());
        } else if let Some(rest) = line.strip_prefix("Step ") {
            let clause = rest.split_once(": ").map(|(_, c)| c).ok_or("malformed step line")?;
            current
                .as_mut()
                .ok_or("step line outside a description")?
                .insert(clause.to_string());
        } else if line == crate::describe::FOOTER {
            if let Some(set) = current.take() {
                flush(section, set, &mut pos, &mut neg, &mut query);
            }
        }
    }
    if let Some(set) = current.take() {
        flush(section, set, &mut pos, &mut neg, &mut query);
    }
    if query.len() != 1 || pos.is_empty() || neg.is_empty() {
        return Err(format!(
            "expected positive, negative and one query entry, found {}/{}/{}",
            pos.len(),
            neg.len(),
            query.len()
        ));
    }
    Ok(verdict(&query[0], &pos, &neg))
}

pub struct ReferenceBackend {
    model: String,
}

impl ReferenceBackend {
    pub fn new(model: &str) -> Self {
        ReferenceBackend {
            model: model.to_string(),
        }
    }
}

impl AnswerSource for ReferenceBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<RawAnswer, BackendError> {
        if !bundle.images.is_empty() {
            return Err(BackendError::UnsupportedModality(self.model.clone()));
        }
        let started = Instant::now();
        let v = reference_classify_prompt(&bundle.user).map_err(|_| BackendError::UnsupportedModality(self.model.clone()))?;
        let text = json!({
            "Analysis": format!(
                "mean token-set similarity to positives {:.4}, to negatives {:.4}",
                v.mean_pos, v.mean_neg
            ),
            "Rule": "the query belongs with the class whose programs share more of its actions",
            "Test Image": format!("similarity margin {:.4}", v.score()),
            "Conclusion": v.label.as_str(),
        })
        .to_string();
        Ok(RawAnswer {
            text,
            latency_s: started.elapsed().as_secs_f64(),
            status: None,
            retries: 0,
            cached: false,
        })
    }
}
