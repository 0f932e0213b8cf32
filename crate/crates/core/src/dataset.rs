//! Problem records, corpus files and seeded evaluation subsets.
//!
//! The canonical corpus is a directory holding one JSON document per split
//! (`ff.json`, `bd.json`, `hd_comb.json`, `hd_novel.json`). Each maps a
//! problem id to `{"concept": ..., "partition": ..., "pos": [...], "neg": [...]}`
//! where every image is a nested token array. Raw records keep all 7+7
//! images; [`select_query`] turns one into a 6+6+1 [`BongardProblem`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::grammar::{parse_image, BongardImage, GrammarError};
use crate::{derive_seed, Label};

pub const SUPPORT_PER_CLASS: usize = 6;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema mismatch in {path} at {trail}: {reason}")]
    SchemaMismatch {
        path: PathBuf,
        trail: String,
        reason: String,
    },
    #[error("{path} at {trail}: {source}")]
    MalformedToken {
        path: PathBuf,
        trail: String,
        #[source]
        source: GrammarError,
    },
    #[error("problem {id} has {pos} positive and {neg} negative images; need at least 7 of each")]
    InsufficientImages { id: String, pos: usize, neg: usize },
    #[error("requested {requested} problems from {split} but only {available} test problems exist")]
    CountExceedsSplit {
        split: Split,
        requested: usize,
        available: usize,
    },
    #[error("unknown problem id {0}")]
    UnknownProblem(String),
    #[error("invalid value {value:?} for {what}")]
    InvalidValue { what: &'static str, value: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "FF")]
    Ff,
    #[serde(rename = "BD")]
    Bd,
    #[serde(rename = "HD_COMB")]
    HdComb,
    #[serde(rename = "HD_NOVEL")]
    HdNovel,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Ff, Split::Bd, Split::HdComb, Split::HdNovel];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Ff => "FF",
            Split::Bd => "BD",
            Split::HdComb => "HD_COMB",
            Split::HdNovel => "HD_NOVEL",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Ff => "ff.json",
            Split::Bd => "bd.json",
            Split::HdComb => "hd_comb.json",
            Split::HdNovel => "hd_novel.json",
        }
    }

    pub fn is_human_designed(self) -> bool {
        matches!(self, Split::HdComb | Split::HdNovel)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "FF" => Ok(Split::Ff),
            "BD" => Ok(Split::Bd),
            "HD_COMB" => Ok(Split::HdComb),
            "HD_NOVEL" => Ok(Split::HdNovel),
            _ => Err(DatasetError::InvalidValue {
                what: "split",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    #[default]
    Test,
}

/// A problem as stored in the corpus, before a query is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawProblem {
    pub id: String,
    pub split: Split,
    pub partition: Partition,
    pub concept: Option<String>,
    pub pos: Vec<BongardImage>,
    pub neg: Vec<BongardImage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CanonicalEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concept: Option<String>,
    #[serde(default)]
    partition: Partition,
    pos: Vec<BongardImage>,
    neg: Vec<BongardImage>,
}

/// Where an image came from inside its raw record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageOrigin {
    pub class: Label,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ProblemImage {
    pub program: BongardImage,
    pub origin: ImageOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BongardProblem {
    pub id: String,
    pub split: Split,
    pub concept: Option<String>,
    pub positives: Vec<ProblemImage>,
    pub negatives: Vec<ProblemImage>,
    pub query: ProblemImage,
    pub gold: Label,
}

impl BongardProblem {
    /// Support images in prompt order: positives then negatives.
    pub fn supports(&self) -> impl Iterator<Item = &ProblemImage> {
        self.positives.iter().chain(self.negatives.iter())
    }

    /// True when the query's program equals a support program.
    pub fn query_duplicates_support(&self) -> bool {
        self.supports().any(|s| s.program == self.query.program)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryPolicy {
    HeldOutPos,
    HeldOutNeg,
    Coin,
}

impl FromStr for QueryPolicy {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "held-out-pos" => Ok(QueryPolicy::HeldOutPos),
            "held-out-neg" => Ok(QueryPolicy::HeldOutNeg),
            "coin" => Ok(QueryPolicy::Coin),
            _ => Err(DatasetError::InvalidValue {
                what: "query policy",
                value: s.to_string(),
            }),
        }
    }
}

/// The first six images of each class become support; the seventh image of
/// the class picked by `policy` becomes the query.
pub fn select_query(raw: &RawProblem, policy: QueryPolicy, seed: u64) -> Result<BongardProblem, DatasetError> {
    let need = SUPPORT_PER_CLASS + 1;
    if raw.pos.len() < need || raw.neg.len() < need {
        return Err(DatasetError::InsufficientImages {
            id: raw.id.clone(),
            pos: raw.pos.len(),
            neg: raw.neg.len(),
        });
    }
    let gold = match policy {
        QueryPolicy::HeldOutPos => Label::Pos,
        QueryPolicy::HeldOutNeg => Label::Neg,
        QueryPolicy::Coin => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &raw.id));
            if rng.random_bool(0.5) {
                Label::Pos
            } else {
                Label::Neg
            }
        }
    };
    let support = |images: &[BongardImage], class: Label| -> Vec<ProblemImage> {
        images[..SUPPORT_PER_CLASS]
            .iter()
            .enumerate()
            .map(|(index, program)| ProblemImage {
                program: program.clone(),
                origin: ImageOrigin { class, index },
            })
            .collect()
    };
    let source = match gold {
        Label::Pos => &raw.pos,
        Label::Neg => &raw.neg,
    };
    Ok(BongardProblem {
        id: raw.id.clone(),
        split: raw.split,
        concept: raw.concept.clone(),
        positives: support(&raw.pos, Label::Pos),
        negatives: support(&raw.neg, Label::Neg),
        query: ProblemImage {
            program: source[SUPPORT_PER_CLASS].clone(),
            origin: ImageOrigin {
                class: gold,
                index: SUPPORT_PER_CLASS,
            },
        },
        gold,
    })
}

/// An immutable, id-ordered set of raw problems.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    problems: BTreeMap<String, RawProblem>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub per_split: BTreeMap<Split, usize>,
    /// Totals by id family (`ff`, `bd`, `hd`).
    pub per_family: BTreeMap<String, usize>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn from_problems(problems: impl IntoIterator<Item = RawProblem>) -> Self {
        Corpus {
            problems: problems.into_iter().map(|p| (p.id.clone(), p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&RawProblem, DatasetError> {
        self.problems
            .get(id)
            .ok_or_else(|| DatasetError::UnknownProblem(id.to_string()))
    }

    pub fn problems(&self) -> impl Iterator<Item = &RawProblem> {
        self.problems.values()
    }

    /// Test-partition ids of `split` in lexicographic order.
    pub fn test_ids(&self, split: Split) -> Vec<&str> {
        self.problems
            .values()
            .filter(|p| p.split == split && p.partition == Partition::Test)
            .map(|p| p.id.as_str())
            .collect()
    }

    pub fn counts(&self) -> BTreeMap<Split, usize> {
        let mut out = BTreeMap::new();
        for p in self.problems.values() {
            *out.entry(p.split).or_insert(0) += 1;
        }
        out
    }

    /// Reads a canonical corpus directory.
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        if !dir.is_dir() {
            return Err(DatasetError::MissingFile(dir.to_path_buf()));
        }
        let mut problems = BTreeMap::new();
        let mut found = false;
        for split in Split::ALL {
            let path = dir.join(split.file_name());
            if !path.exists() {
                continue;
            }
            found = true;
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let entries: BTreeMap<String, CanonicalEntry> =
                serde_json::from_str(&text).map_err(|source| DatasetError::Json {
                    path: path.clone(),
                    source,
                })?;
            for (id, e) in entries {
                problems.insert(
                    id.clone(),
                    RawProblem {
                        id,
                        split,
                        partition: e.partition,
                        concept: e.concept,
                        pos: e.pos,
                        neg: e.neg,
                    },
                );
            }
        }
        if !found {
            return Err(DatasetError::MissingFile(dir.join(Split::Ff.file_name())));
        }
        Ok(Corpus { problems })
    }

    /// Writes one canonical JSON document per split.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for split in Split::ALL {
            let entries: BTreeMap<&str, CanonicalEntry> = self
                .problems
                .values()
                .filter(|p| p.split == split)
                .map(|p| {
                    (
                        p.id.as_str(),
                        CanonicalEntry {
                            concept: p.concept.clone(),
                            partition: p.partition,
                            pos: p.pos.clone(),
                            neg: p.neg.clone(),
                        },
                    )
                })
                .collect();
            let path = dir.join(split.file_name());
            let mut text = serde_json::to_string_pretty(&entries).map_err(|source| DatasetError::Json {
                path: path.clone(),
                source,
            })?;
            text.push('\n');
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Upstream adapter

fn find_files(root: &Path, pred: &dyn Fn(&str) -> bool, out: &mut Vec<PathBuf>) -> Result<(), DatasetError> {
    let mut entries: Vec<_> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_files(&path, pred, out)?;
        } else if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".json") && pred(n))
        {
            out.push(path);
        }
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn schema(path: &Path, trail: &str, reason: impl Into<String>) -> DatasetError {
    DatasetError::SchemaMismatch {
        path: path.to_path_buf(),
        trail: trail.to_string(),
        reason: reason.into(),
    }
}

fn parse_images(path: &Path, trail: &str, v: &Value) -> Result<Vec<BongardImage>, DatasetError> {
    let images = v.as_array().ok_or_else(|| schema(path, trail, "expected a list of images"))?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let trail = format!("{trail}/{i}");
            let shapes = img
                .as_array()
                .ok_or_else(|| schema(path, &trail, "expected a list of strokes"))?;
            let mut nested = Vec::with_capacity(shapes.len());
            for (s, shape) in shapes.iter().enumerate() {
                let tokens = shape
                    .as_array()
                    .ok_or_else(|| schema(path, &format!("{trail}/{s}"), "expected a list of action tokens"))?;
                let tokens = tokens
                    .iter()
                    .enumerate()
                    .map(|(a, t)| {
                        t.as_str()
                            .map(|t| t.trim().to_string())
                            .ok_or_else(|| schema(path, &format!("{trail}/{s}/{a}"), "expected a string token"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                nested.push(tokens);
            }
            parse_image(&nested).map_err(|source| DatasetError::MalformedToken {
                path: path.to_path_buf(),
                trail,
                source,
            })
        })
        .collect()
}

fn family_of(id: &str, path: &Path) -> Option<&'static str> {
    let lower = id.to_ascii_lowercase();
    for fam in ["ff", "bd", "hd"] {
        if lower.starts_with(&format!("{fam}_")) {
            return Some(fam);
        }
    }
    let name = path.to_string_lossy().to_ascii_lowercase();
    ["ff", "bd", "hd"]
        .into_iter()
        .find(|fam| name.contains(&format!("/{fam}/")) || name.contains(&format!("{fam}_action")))
}

/// Imports the upstream distribution found under `root`.
///
/// Every `*action_programs*.json` file maps problem ids to `[pos, neg]` (or an
/// object with `pos`/`neg` keys), each a list of images made of strokes made
/// of action tokens. An optional `*split*.json` assigns test problems to
/// `test_ff`, `test_bd`, `test_hd_comb` and `test_hd_novel` (other keys mark
/// train/val problems); an optional `concepts.json` maps ids to concept text.
pub fn import_upstream(root: &Path) -> Result<(Corpus, ImportReport), DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingFile(root.to_path_buf()));
    }
    let mut program_files = Vec::new();
    find_files(root, &|n| n.contains("action_programs"), &mut program_files)?;
    if program_files.is_empty() {
        return Err(DatasetError::MissingFile(root.join("*_action_programs.json")));
    }
    let mut split_files = Vec::new();
    find_files(root, &|n| n.contains("split") && !n.contains("action_programs"), &mut split_files)?;
    let mut concept_files = Vec::new();
    find_files(root, &|n| n == "concepts.json", &mut concept_files)?;

    let mut report = ImportReport::default();

    let mut test_split: BTreeMap<String, Split> = BTreeMap::new();
    let mut non_test: BTreeMap<String, Partition> = BTreeMap::new();
    for path in &split_files {
        let v = read_json(path)?;
        let obj = v.as_object().ok_or_else(|| schema(path, "", "expected an object of id lists"))?;
        for (key, ids) in obj {
            let ids = ids
                .as_array()
                .ok_or_else(|| schema(path, key, "expected a list of problem ids"))?;
            let target = match key.as_str() {
                "test_ff" => Some(Ok(Split::Ff)),
                "test_bd" => Some(Ok(Split::Bd)),
                "test_hd_comb" => Some(Ok(Split::HdComb)),
                "test_hd_novel" => Some(Ok(Split::HdNovel)),
                "train" => Some(Err(Partition::Train)),
                "val" => Some(Err(Partition::Val)),
                _ => None,
            };
            for id in ids.iter().filter_map(Value::as_str) {
                match target {
                    Some(Ok(split)) => {
                        test_split.insert(id.to_string(), split);
                    }
                    Some(Err(part)) => {
                        non_test.insert(id.to_string(), part);
                    }
                    None => {}
                }
            }
        }
        report.files.push(path.clone());
    }
    if split_files.is_empty() {
        report
            .warnings
            .push("no split file found; all problems treated as test, HD problems as HD_COMB".to_string());
    }

    let mut concepts: BTreeMap<String, String> = BTreeMap::new();
    for path in &concept_files {
        let v = read_json(path)?;
        let obj = v.as_object().ok_or_else(|| schema(path, "", "expected an object of id -> concept"))?;
        for (id, c) in obj {
            let c = c.as_str().ok_or_else(|| schema(path, id, "expected concept text"))?;
            concepts.insert(id.clone(), c.to_string());
        }
        report.files.push(path.clone());
    }

    let mut problems = Vec::new();
    for path in &program_files {
        let v = read_json(path)?;
        let obj = v
            .as_object()
            .ok_or_else(|| schema(path, "", "expected an object keyed by problem id"))?;
        for (id, rec) in obj {
            let (pos_v, neg_v) = match rec {
                Value::Array(pair) if pair.len() == 2 => (&pair[0], &pair[1]),
                Value::Object(m) => {
                    let pos = m.get("pos").or_else(|| m.get("positive"));
                    let neg = m.get("neg").or_else(|| m.get("negative"));
                    match (pos, neg) {
                        (Some(p), Some(n)) => (p, n),
                        _ => return Err(schema(path, id, "expected pos and neg keys")),
                    }
                }
                _ => return Err(schema(path, id, "expected [pos, neg]")),
            };
            let pos = parse_images(path, &format!("{id}/pos"), pos_v)?;
            let neg = parse_images(path, &format!("{id}/neg"), neg_v)?;
            let family = family_of(id, path)
                .ok_or_else(|| schema(path, id, "cannot tell whether problem is ff, bd or hd"))?;
            *report.per_family.entry(family.to_string()).or_insert(0) += 1;

            let (split, partition) = match test_split.get(id) {
                Some(&s) => (s, Partition::Test),
                None => {
                    let split = match family {
                        "ff" => Split::Ff,
                        "bd" => Split::Bd,
                        _ => Split::HdComb,
                    };
                    let partition = if split_files.is_empty() {
                        Partition::Test
                    } else {
                        non_test.get(id).copied().unwrap_or(Partition::Train)
                    };
                    (split, partition)
                }
            };
            let raw = RawProblem {
                id: id.clone(),
                split,
                partition,
                concept: concepts.get(id).cloned(),
                pos,
                neg,
            };
            if raw.pos.len() > SUPPORT_PER_CLASS && raw.neg.len() > SUPPORT_PER_CLASS {
                for policy in [QueryPolicy::HeldOutPos, QueryPolicy::HeldOutNeg] {
                    let p = select_query(&raw, policy, 0)?;
                    if p.query_duplicates_support() {
                        report.warnings.push(format!(
                            "{id}: {} query program repeats a support program",
                            p.gold
                        ));
                    }
                }
            } else {
                report.warnings.push(format!(
                    "{id}: fewer than 7 images per class ({} pos, {} neg)",
                    raw.pos.len(),
                    raw.neg.len()
                ));
            }
            *report.per_split.entry(split).or_insert(0) += 1;
            problems.push(raw);
        }
        report.files.push(path.clone());
    }
    Ok((Corpus::from_problems(problems), report))
}

// ---------------------------------------------------------------------------
// Subsets

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub per_split: usize,
    pub seed: u64,
    #[serde(default = "all_splits")]
    pub splits: Vec<Split>,
}

fn all_splits() -> Vec<Split> {
    Split::ALL.to_vec()
}

impl SubsetSpec {
    pub fn new(per_split: usize, seed: u64) -> Self {
        SubsetSpec {
            per_split,
            seed,
            splits: all_splits(),
        }
    }
}

impl Default for SubsetSpec {
    fn default() -> Self {
        SubsetSpec::new(500, 0)
    }
}

/// The persisted list of problem ids every model is evaluated on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub seed: u64,
    pub per_split: usize,
    pub ids: Vec<String>,
}

impl SubsetManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        if !path.exists() {
            return Err(DatasetError::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        fs::write(path, text).map_err(io_err(path))
    }
}

/// Draws `per_split` test problems from each split uniformly without
/// replacement. Ids are sorted before drawing and the drawn ids are listed in
/// sorted order within each split.
pub fn sample_subset(corpus: &Corpus, spec: &SubsetSpec) -> Result<SubsetManifest, DatasetError> {
    let mut ids = Vec::with_capacity(spec.per_split * spec.splits.len());
    let mut seen = BTreeSet::new();
    for &split in &spec.splits {
        if !seen.insert(split) {
            continue;
        }
        let pool = corpus.test_ids(split);
        if spec.per_split > pool.len() {
            return Err(DatasetError::CountExceedsSplit {
                split,
                requested: spec.per_split,
                available: pool.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, split.as_str()));
        let mut picked: Vec<&str> = index::sample(&mut rng, pool.len(), spec.per_split)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();
        ids.extend(picked.into_iter().map(str::to_string));
    }
    Ok(SubsetManifest {
        seed: spec.seed,
        per_split: spec.per_split,
        ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(token: &str) -> BongardImage {
        parse_image(&[vec![token]]).unwrap()
    }

    pub(crate) fn raw(id: &str, split: Split, n: usize) -> RawProblem {
        RawProblem {
            id: id.to_string(),
            split,
            partition: Partition::Test,
            concept: None,
            pos: (0..n).map(|i| img(&format!("line_normal_0.{:03}-0.500", 100 + i))).collect(),
            neg: (0..n).map(|i| img(&format!("line_zigzag_0.{:03}-0.500", 100 + i))).collect(),
        }
    }

    #[test]
    fn policy_forces_gold() {
        let r = raw("bd_x", Split::Bd, 7);
        let p = select_query(&r, QueryPolicy::HeldOutPos, 1).unwrap();
        assert_eq!(p.gold, Label::Pos);
        assert_eq!(p.query.program, r.pos[6]);
        assert_eq!((p.positives.len(), p.negatives.len()), (6, 6));
        let n = select_query(&r, QueryPolicy::HeldOutNeg, 1).unwrap();
        assert_eq!(n.gold, Label::Neg);
        assert_eq!(n.query.origin, ImageOrigin { class: Label::Neg, index: 6 });
        assert!(!p.query_duplicates_support());
    }

    #[test]
    fn coin_is_reproducible() {
        let problems: Vec<_> = (0..40).map(|i| raw(&format!("ff_{i:03}"), Split::Ff, 7)).collect();
        let run = || -> Vec<Label> {
            problems
                .iter()
                .map(|r| select_query(r, QueryPolicy::Coin, 99).unwrap().gold)
                .collect()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.contains(&Label::Pos) && a.contains(&Label::Neg));
    }

    #[test]
    fn too_few_images() {
        let r = raw("bd_x", Split::Bd, 6);
        assert!(matches!(
            select_query(&r, QueryPolicy::Coin, 0),
            Err(DatasetError::InsufficientImages { pos: 6, neg: 6, .. })
        ));
    }

    fn corpus(n_per_split: usize) -> Corpus {
        Corpus::from_problems(Split::ALL.iter().flat_map(|&s| {
            (0..n_per_split).map(move |i| raw(&format!("{}_{i:04}", s.as_str().to_lowercase()), s, 7))
        }))
    }

    #[test]
    fn subset_sizes_and_determinism() {
        let c = corpus(30);
        let m = sample_subset(&c, &SubsetSpec::new(10, 5)).unwrap();
        assert_eq!(m.ids.len(), 40);
        assert_eq!(m, sample_subset(&c, &SubsetSpec::new(10, 5)).unwrap());
        assert_ne!(m.ids, sample_subset(&c, &SubsetSpec::new(10, 6)).unwrap().ids);
        let unique: BTreeSet<_> = m.ids.iter().collect();
        assert_eq!(unique.len(), 40);
        assert!(sample_subset(&c, &SubsetSpec::new(0, 5)).unwrap().ids.is_empty());
        assert!(matches!(
            sample_subset(&c, &SubsetSpec::new(31, 5)),
            Err(DatasetError::CountExceedsSplit { requested: 31, available: 30, .. })
        ));
    }

    #[test]
    fn subset_ignores_insertion_order() {
        let c = corpus(20);
        let mut rev: Vec<RawProblem> = c.problems().cloned().collect();
        rev.reverse();
        let c2 = Corpus::from_problems(rev);
        let spec = SubsetSpec::new(7, 11);
        assert_eq!(sample_subset(&c, &spec).unwrap(), sample_subset(&c2, &spec).unwrap());
    }

    #[test]
    fn canonical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = corpus(2);
        c.problems.get_mut("bd_0000").unwrap().concept = Some("has four arcs".into());
        c.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back, c);
        // idempotent
        back.save(dir.path()).unwrap();
        assert_eq!(Corpus::load(dir.path()).unwrap(), c);
    }

    #[test]
    fn empty_dirs_are_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(DatasetError::MissingFile(_))));
        assert!(matches!(import_upstream(dir.path()), Err(DatasetError::MissingFile(_))));
    }

    fn images_json(style: &str, n: usize) -> Value {
        Value::Array(
            (0..n)
                .map(|i| serde_json::json!([[format!("line_{style}_0.{:03}-0.500", 200 + i)]]))
                .collect(),
        )
    }

    #[test]
    fn upstream_import_with_split_file() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("ff")).unwrap();
        fs::create_dir_all(root.join("hd")).unwrap();
        let ff = serde_json::json!({
            "ff_nact4_0000": [images_json("normal", 7), images_json("zigzag", 7)],
            "ff_nact4_0001": [images_json("normal", 7), images_json("square", 7)],
        });
        let hd = serde_json::json!({
            "hd_fan_0000": {"pos": images_json("normal", 7), "neg": images_json("circle", 7)},
            "hd_novel_0001": [images_json("normal", 7), images_json("triangle", 7)],
        });
        fs::write(root.join("ff/ff_action_programs.json"), ff.to_string()).unwrap();
        fs::write(root.join("hd/hd_action_programs.json"), hd.to_string()).unwrap();
        let split = serde_json::json!({
            "train": ["ff_nact4_0001"],
            "test_ff": ["ff_nact4_0000"],
            "test_hd_comb": ["hd_fan_0000"],
            "test_hd_novel": ["hd_novel_0001"],
        });
        fs::write(root.join("ShapeBongard_V2_split.json"), split.to_string()).unwrap();
        fs::write(root.join("concepts.json"), r#"{"hd_fan_0000": "fan"}"#).unwrap();

        let (c, report) = import_upstream(root).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(report.per_family["ff"], 2);
        assert_eq!(report.per_family["hd"], 2);
        assert_eq!(report.per_split[&Split::HdNovel], 1);
        assert_eq!(c.test_ids(Split::Ff), vec!["ff_nact4_0000"]);
        assert_eq!(c.get("hd_fan_0000").unwrap().concept.as_deref(), Some("fan"));
        assert_eq!(c.get("hd_novel_0001").unwrap().split, Split::HdNovel);

        let (again, _) = import_upstream(root).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn upstream_schema_errors_carry_trail() {
        let dir = tempfile::tempdir().unwrap();
        let bad = serde_json::json!({"bd_x_0000": [images_json("normal", 7), [[["line_normal_9.999-0.500"]]]]});
        fs::write(dir.path().join("bd_action_programs.json"), bad.to_string()).unwrap();
        match import_upstream(dir.path()) {
            Err(DatasetError::MalformedToken { trail, .. }) => assert_eq!(trail, "bd_x_0000/neg/0"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = serde_json::json!({"bd_x_0000": [images_json("normal", 7), [["not", 3]]]});
        fs::write(dir.path().join("bd_action_programs.json"), bad.to_string()).unwrap();
        match import_upstream(dir.path()) {
            Err(DatasetError::SchemaMismatch { trail, .. }) => assert_eq!(trail, "bd_x_0000/neg/0/0"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
