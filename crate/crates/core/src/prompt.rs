//! System and user prompts for every experimental condition.
//!
//! System prompts come from versioned template files under `templates/v1`.
//! A [`Condition`] prints as a compact spec such as `ap,concept` or
//! `ad,shuffle-seq:7`; that string doubles as the condition fingerprint in
//! record logs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{BongardProblem, ProblemImage};
use crate::describe::render_description;
use crate::grammar::BongardImage;
use crate::perturb::{shuffle_categories, shuffle_query_sequence};
use crate::Label;

pub const TEMPLATE_VERSION: &str = "v1";
pub const CONCEPT_PREFIX: &str = "Here is the overall concept behind the positive samples: ";
pub const TASK_MARKER: &str = "**Your Task and Required Output:**";
pub const CLOSING_LINE: &str = "Classify the query as 'positive' or 'negative'. Respond with JSON only.";

pub mod templates {
    pub const VISUAL: &str = include_str!("../templates/v1/visual.txt");
    pub const CG_AP: &str = include_str!("../templates/v1/cg_ap.txt");
    pub const CG_AD: &str = include_str!("../templates/v1/cg_ad.txt");
    pub const MINIMAL: &str = include_str!("../templates/v1/minimal.txt");
    pub const GROUNDED_BASE: &str = include_str!("../templates/v1/grounded_base.txt");
    pub const GROUNDED_AD: &str = include_str!("../templates/v1/grounded_ad.txt");
    pub const GROUNDED_AP: &str = include_str!("../templates/v1/grounded_ap.txt");

    /// `(file name, contents)` for every template.
    pub const ALL: [(&str, &str); 7] = [
        ("visual.txt", VISUAL),
        ("cg_ap.txt", CG_AP),
        ("cg_ad.txt", CG_AD),
        ("minimal.txt", MINIMAL),
        ("grounded_base.txt", GROUNDED_BASE),
        ("grounded_ad.txt", GROUNDED_AD),
        ("grounded_ap.txt", GROUNDED_AP),
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("condition requires concept text but problem {0} has none")]
    MissingConcept(String),
    #[error("image file missing: {0}")]
    ImageFileMissing(PathBuf),
    #[error("condition {0} needs rendered images but no image directory was given")]
    NoImageStore(String),
    #[error("invalid condition {spec:?}: {reason}")]
    InvalidCondition { spec: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Ap,
    Ad,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Context {
    #[default]
    Full,
    Minimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grounding {
    #[default]
    None,
    QueryImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    #[default]
    None,
    Categories { seed: u64 },
    QuerySequence { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Condition {
    pub representation: Representation,
    pub concept: bool,
    pub context: Context,
    pub grounding: Grounding,
    pub perturbation: Perturbation,
}

impl Condition {
    pub fn new(representation: Representation) -> Self {
        Condition {
            representation,
            concept: false,
            context: Context::Full,
            grounding: Grounding::None,
            perturbation: Perturbation::None,
        }
    }

    pub fn with_concept(mut self) -> Self {
        self.concept = true;
        self
    }

    pub fn minimal(mut self) -> Self {
        self.context = Context::Minimal;
        self
    }

    pub fn grounded(mut self) -> Self {
        self.grounding = Grounding::QueryImage;
        self
    }

    pub fn perturbed(mut self, perturbation: Perturbation) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let plain = !self.concept
            && self.context == Context::Full
            && self.grounding == Grounding::None
            && self.perturbation == Perturbation::None;
        if self.representation == Representation::Image && !plain {
            return Err(PromptError::InvalidCondition {
                spec: self.to_string(),
                reason: "image condition sends all 13 images and takes no other option".into(),
            });
        }
        Ok(())
    }

    pub fn needs_images(&self) -> bool {
        self.representation == Representation::Image || self.grounding == Grounding::QueryImage
    }

    /// The condition fingerprint stored in every record.
    pub fn fingerprint(&self) -> String {
        self.to_string()
    }

    /// Applies the condition's perturbation; the gold label is kept.
    pub fn prepare(&self, p: &BongardProblem) -> BongardProblem {
        match self.perturbation {
            Perturbation::None => p.clone(),
            Perturbation::Categories { seed } => shuffle_categories(p, seed),
            Perturbation::QuerySequence { seed } => shuffle_query_sequence(p, seed),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.representation {
            Representation::Ap => "ap",
            Representation::Ad => "ad",
            Representation::Image => "image",
        })?;
        if self.concept {
            f.write_str(",concept")?;
        }
        if self.context == Context::Minimal {
            f.write_str(",minimal")?;
        }
        if self.grounding == Grounding::QueryImage {
            f.write_str(",grounded")?;
        }
        match self.perturbation {
            Perturbation::None => Ok(()),
            Perturbation::Categories { seed } => write!(f, ",shuffle-cat:{seed}"),
            Perturbation::QuerySequence { seed } => write!(f, ",shuffle-seq:{seed}"),
        }
    }
}

impl FromStr for Condition {
    type Err = PromptError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let invalid = |reason: String| PromptError::InvalidCondition {
            spec: spec.to_string(),
            reason,
        };
        let mut parts = spec.split(',').map(str::trim);
        let representation = match parts.next().unwrap_or("").to_ascii_lowercase().as_str() {
            "ap" => Representation::Ap,
            "ad" => Representation::Ad,
            "image" => Representation::Image,
            other => return Err(invalid(format!("unknown representation {other:?}"))),
        };
        let mut c = Condition::new(representation);
        let mut seen = Vec::new();
        for part in parts {
            let (key, value) = part.split_once(':').unwrap_or((part, ""));
            if seen.contains(&key) || (key.starts_with("shuffle") && seen.iter().any(|k| k.starts_with("shuffle"))) {
                return Err(invalid(format!("option {key:?} given twice")));
            }
            seen.push(key);
            let seed = || -> Result<u64, PromptError> {
                value
                    .parse()
                    .map_err(|_| invalid(format!("{key} needs an integer seed, got {value:?}")))
            };
            match key {
                "concept" => c.concept = true,
                "minimal" => c.context = Context::Minimal,
                "grounded" => c.grounding = Grounding::QueryImage,
                "shuffle-cat" => c.perturbation = Perturbation::Categories { seed: seed()? },
                "shuffle-seq" => c.perturbation = Perturbation::QuerySequence { seed: seed()? },
                _ => return Err(invalid(format!("unknown option {key:?}"))),
            }
            if !value.is_empty() && !key.starts_with("shuffle") {
                return Err(invalid(format!("option {key:?} takes no value")));
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl TryFrom<String> for Condition {
    type Error = PromptError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImageAttachment {
    pub path: PathBuf,
    /// `pos 1`..`pos 6`, `neg 1`..`neg 6` or `query`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub images: Vec<ImageAttachment>,
}

/// Rendered PNGs laid out as `{root}/{problem id}/{1|0}/{index}.png`,
/// where `1` holds positives and `0` negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageStore {
    pub root: PathBuf,
}

impl ImageStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageStore { root: root.into() }
    }

    pub fn path_for(&self, problem_id: &str, image: &ProblemImage) -> PathBuf {
        let class = match image.origin.class {
            Label::Pos => "1",
            Label::Neg => "0",
        };
        self.root
            .join(problem_id)
            .join(class)
            .join(format!("{}.png", image.origin.index))
    }
}

fn base_template(c: &Condition) -> &'static str {
    use Representation::*;
    match (c.representation, c.context, c.grounding) {
        (Image, _, _) => templates::VISUAL,
        (_, Context::Minimal, Grounding::QueryImage) => templates::GROUNDED_BASE,
        (Ap, Context::Full, Grounding::QueryImage) => templates::GROUNDED_AP,
        (Ad, Context::Full, Grounding::QueryImage) => templates::GROUNDED_AD,
        (_, Context::Minimal, Grounding::None) => templates::MINIMAL,
        (Ap, Context::Full, Grounding::None) => templates::CG_AP,
        (Ad, Context::Full, Grounding::None) => templates::CG_AD,
    }
}

/// Inserts the concept line (followed by a blank line) before the task block.
fn insert_concept(template: &str, concept: &str) -> String {
    let line = format!("{CONCEPT_PREFIX}{concept}\n\n");
    match template.find(TASK_MARKER) {
        Some(at) => format!("{}{line}{}", &template[..at], &template[at..]),
        None => format!("{template}\n{line}"),
    }
}

pub fn build_system_prompt(c: &Condition, concept: Option<&str>) -> Result<String, PromptError> {
    c.validate()?;
    let template = base_template(c);
    if !c.concept {
        return Ok(template.to_string());
    }
    match concept.map(str::trim) {
        Some(text) if !text.is_empty() => Ok(insert_concept(template, text)),
        _ => Err(PromptError::MissingConcept(String::new())),
    }
}

/// Python-style literal of the nested token lists, e.g. `[['line_normal_0.500-0.500']]`.
pub fn program_literal(image: &BongardImage) -> String {
    let shapes: Vec<String> = image
        .shapes()
        .iter()
        .map(|s| {
            let tokens: Vec<String> = s.actions().iter().map(|a| format!("'{a}'")).collect();
            format!("[{}]", tokens.join(", "))
        })
        .collect();
    format!("[{}]", shapes.join(", "))
}

fn entry(c: &Condition, image: &ProblemImage, figure: usize) -> String {
    match c.representation {
        Representation::Ap => program_literal(&image.program),
        Representation::Ad => render_description(&image.program, figure).text(),
        Representation::Image => format!("[Image {figure}]"),
    }
}

/// Three sections (6 positives, 6 negatives, 1 query) and the closing instruction.
pub fn build_user_prompt(p: &BongardProblem, c: &Condition) -> String {
    let mut figure = 0;
    let mut section = |title: &str, images: &[ProblemImage]| -> String {
        let mut lines = vec![title.to_string()];
        for img in images {
            figure += 1;
            lines.push(entry(c, img, figure));
        }
        lines.join("\n")
    };
    let pos = section(&format!("POSITIVE SET ({} descriptions):", p.positives.len()), &p.positives);
    let neg = section(&format!("NEGATIVE SET ({} descriptions):", p.negatives.len()), &p.negatives);
    let query = section("QUERY (1 description):", std::slice::from_ref(&p.query));
    format!("{pos}\n\n{neg}\n\n{query}\n\n{CLOSING_LINE}")
}

/// Image condition: all 13 images in prompt order. Grounded: only the query.
pub fn attach_images(
    p: &BongardProblem,
    c: &Condition,
    store: Option<&ImageStore>,
) -> Result<Vec<ImageAttachment>, PromptError> {
    if !c.needs_images() {
        return Ok(Vec::new());
    }
    let store = store.ok_or_else(|| PromptError::NoImageStore(c.to_string()))?;
    let mut wanted: Vec<(&ProblemImage, String)> = Vec::with_capacity(13);
    if c.representation == Representation::Image {
        wanted.extend(p.positives.iter().enumerate().map(|(i, img)| (img, format!("pos {}", i + 1))));
        wanted.extend(p.negatives.iter().enumerate().map(|(i, img)| (img, format!("neg {}", i + 1))));
    }
    wanted.push((&p.query, "query".to_string()));
    wanted
        .into_iter()
        .map(|(img, label)| {
            let path = store.path_for(&p.id, img);
            if path.is_file() {
                Ok(ImageAttachment { path, label })
            } else {
                Err(PromptError::ImageFileMissing(path))
            }
        })
        .collect()
}

/// Builds the complete bundle for an already perturbed problem.
pub fn build_bundle(
    p: &BongardProblem,
    c: &Condition,
    store: Option<&ImageStore>,
) -> Result<PromptBundle, PromptError> {
    let system = build_system_prompt(c, p.concept.as_deref()).map_err(|e| match e {
        PromptError::MissingConcept(_) => PromptError::MissingConcept(p.id.clone()),
        other => other,
    })?;
    Ok(PromptBundle {
        system,
        user: build_user_prompt(p, c),
        images: attach_images(p, c, store)?,
    })
}

/// True when every template on disk under `dir` matches the compiled-in copy.
pub fn templates_match_dir(dir: &Path) -> std::io::Result<bool> {
    for (name, body) in templates::ALL {
        if std::fs::read_to_string(dir.join(name))? != body {
            return Ok(false);
        }
    }
    Ok(true)
}
