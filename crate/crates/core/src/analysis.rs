//! Accuracy tables, per-model deltas, grouped statistics and the
//! correctness × class chi-square test.
//!
//! Aggregates are kept at full precision; one-decimal rounding happens only
//! when a table is rendered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Split;
use crate::format_fixed;
use crate::harness::{EvalRecord, RecordStatus};
use crate::Label;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no values for {0}")]
    EmptyGroup(String),
    #[error("model sets differ between {a} and {b}: {detail}")]
    ModelSetMismatch { a: String, b: String, detail: String },
    #[error("{what} needs at least 2 values, got {n}")]
    GroupTooSmall { what: String, n: usize },
    #[error("contingency table has a zero marginal: {0:?}")]
    DegenerateMarginal([u64; 4]),
    #[error("records contain no {0} examples")]
    MissingClass(Label),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("unknown table {0:?}")]
    UnknownTable(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |e| AnalysisError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Condition fingerprint with perturbation seeds removed, e.g. `ap,shuffle-cat:7` → `ap,shuffle-cat`.
pub fn condition_family(fingerprint: &str) -> String {
    fingerprint
        .split(',')
        .map(|p| p.split_once(':').map_or(p, |(k, _)| k))
        .collect::<Vec<_>>()
        .join(",")
}

pub mod families {
    pub const AP: &str = "ap";
    pub const AD: &str = "ad";
    pub const AP_CONCEPT: &str = "ap,concept";
    pub const AD_CONCEPT: &str = "ad,concept";
    pub const BASE: &str = "ap,minimal";
    pub const AP_GROUNDED: &str = "ap,grounded";
    pub const AD_GROUNDED: &str = "ad,grounded";
    pub const SHUFFLE_CAT: &str = "ap,shuffle-cat";
    pub const SHUFFLE_SEQ: &str = "ap,shuffle-seq";
}

/// A reporting category: one split, or HD as the mean of its two splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Ff,
    Bd,
    Hd,
    HdComb,
    HdNovel,
}

impl Category {
    pub const HEADLINE: [Category; 3] = [Category::Ff, Category::Bd, Category::Hd];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Ff => "FF",
            Category::Bd => "BD",
            Category::Hd => "HD",
            Category::HdComb => "HD_COMB",
            Category::HdNovel => "HD_NOVEL",
        }
    }

    fn splits(self) -> &'static [Split] {
        match self {
            Category::Ff => &[Split::Ff],
            Category::Bd => &[Split::Bd],
            Category::Hd => &[Split::HdComb, Split::HdNovel],
            Category::HdComb => &[Split::HdComb],
            Category::HdNovel => &[Split::HdNovel],
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Per-model scores

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub condition: String,
    pub split: Split,
    pub accuracy: f64,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub parse_failures: Option<usize>,
}

/// Accuracy per (model, condition family, split).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelScores {
    rows: BTreeMap<(String, String, Split), ScoreRow>,
}

impl ModelScores {
    pub fn from_rows(rows: impl IntoIterator<Item = ScoreRow>) -> Self {
        let mut s = ModelScores::default();
        for r in rows {
            s.insert(r);
        }
        s
    }

    pub fn insert(&mut self, row: ScoreRow) {
        self.rows
            .insert((row.model.clone(), row.condition.clone(), row.split), row);
    }

    pub fn rows(&self) -> impl Iterator<Item = &ScoreRow> {
        self.rows.values()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads `model,condition,split,accuracy` CSV files.
    pub fn load_csv(paths: &[PathBuf]) -> Result<Self, AnalysisError> {
        let mut s = ModelScores::default();
        for path in paths {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| AnalysisError::Io {
                path: path.clone(),
                message: e.to_string(),
            })?;
            for row in rdr.deserialize::<ScoreRow>() {
                let row = row.map_err(|e| AnalysisError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                s.insert(row);
            }
        }
        Ok(s)
    }

    /// Per-model accuracy from a record log; parse and transport failures count as incorrect.
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut tally: BTreeMap<(String, String, Split), (usize, usize, usize)> = BTreeMap::new();
        for r in records {
            let e = tally
                .entry((r.model.clone(), condition_family(&r.condition), r.split))
                .or_default();
            e.0 += 1;
            e.1 += usize::from(r.correct);
            e.2 += usize::from(r.status == RecordStatus::ParseFailure);
        }
        ModelScores::from_rows(tally.into_iter().map(|((model, condition, split), (n, c, pf))| ScoreRow {
            model,
            condition,
            split,
            accuracy: 100.0 * c as f64 / n as f64,
            n: Some(n),
            parse_failures: Some(pf),
        }))
    }

    pub fn get(&self, model: &str, condition: &str, split: Split) -> Option<f64> {
        self.rows
            .get(&(model.to_string(), condition.to_string(), split))
            .map(|r| r.accuracy)
    }

    /// Split accuracy, or the mean over both HD splits.
    pub fn value(&self, model: &str, condition: &str, category: Category) -> Option<f64> {
        let vals: Option<Vec<f64>> = category
            .splits()
            .iter()
            .map(|&s| self.get(model, condition, s))
            .collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn conditions(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|(_, c, _)| c.as_str()).collect()
    }

    /// Models that have a value for `condition` in `category`.
    pub fn models(&self, condition: &str, category: Category) -> BTreeSet<String> {
        self.rows
            .keys()
            .filter(|(_, c, _)| c == condition)
            .map(|(m, _, _)| m.clone())
            .filter(|m| self.value(m, condition, category).is_some())
            .collect()
    }

    /// Per-model values in model-name order.
    pub fn values(&self, condition: &str, category: Category) -> Vec<(String, f64)> {
        self.models(condition, category)
            .into_iter()
            .filter_map(|m| self.value(&m, condition, category).map(|v| (m, v)))
            .collect()
    }

    /// Parse failures as a percentage of answers, when the rows carry counts.
    pub fn parse_failure_rate(&self, condition: &str) -> Option<f64> {
        let mut n = 0usize;
        let mut pf = 0usize;
        for r in self.rows.values().filter(|r| r.condition == condition) {
            n += r.n?;
            pf += r.parse_failures?;
        }
        (n > 0).then(|| 100.0 * pf as f64 / n as f64)
    }
}

/// Mean over models of per-model accuracy.
pub fn pooled(scores: &ModelScores, condition: &str, category: Category) -> Result<f64, AnalysisError> {
    let v = scores.values(condition, category);
    if v.is_empty() {
        return Err(AnalysisError::EmptyGroup(format!("{condition} {category}")));
    }
    Ok(v.iter().map(|(_, x)| x).sum::<f64>() / v.len() as f64)
}

// ---------------------------------------------------------------------------
// Record-level tables

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKey {
    Model,
    Condition,
    Split,
    Class,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub key: Vec<String>,
    pub n: usize,
    pub correct: usize,
    pub parse_failures: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub keys: Vec<GroupKey>,
    pub rows: Vec<ResultRow>,
}

fn key_value(r: &EvalRecord, k: GroupKey) -> String {
    match k {
        GroupKey::Model => r.model.clone(),
        GroupKey::Condition => r.condition.clone(),
        GroupKey::Split => r.split.to_string(),
        GroupKey::Class => r.gold.to_string(),
    }
}

/// Accuracy per group. With `hd_mean`, and `Split` among the keys, an extra
/// `HD` row per group holds the mean of its HD_COMB and HD_NOVEL accuracies.
pub fn accuracy_table(records: &[EvalRecord], keys: &[GroupKey], hd_mean: bool) -> Result<ResultTable, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyGroup("no records".into()));
    }
    let mut groups: BTreeMap<Vec<String>, (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let e = groups.entry(keys.iter().map(|&k| key_value(r, k)).collect()).or_default();
        e.0 += 1;
        e.1 += usize::from(r.correct);
        e.2 += usize::from(r.status == RecordStatus::ParseFailure);
    }
    let mut rows: Vec<ResultRow> = groups
        .into_iter()
        .map(|(key, (n, correct, pf))| ResultRow {
            key,
            n,
            correct,
            parse_failures: pf,
            accuracy: 100.0 * correct as f64 / n as f64,
        })
        .collect();
    if let (true, Some(si)) = (hd_mean, keys.iter().position(|&k| k == GroupKey::Split)) {
        let mut extra = Vec::new();
        for comb in rows.iter().filter(|r| r.key[si] == Split::HdComb.as_str()) {
            let mut novel_key = comb.key.clone();
            novel_key[si] = Split::HdNovel.to_string();
            if let Some(novel) = rows.iter().find(|r| r.key == novel_key) {
                let mut key = comb.key.clone();
                key[si] = "HD".into();
                extra.push(ResultRow {
                    key,
                    n: comb.n + novel.n,
                    correct: comb.correct + novel.correct,
                    parse_failures: comb.parse_failures + novel.parse_failures,
                    accuracy: (comb.accuracy + novel.accuracy) / 2.0,
                });
            }
        }
        rows.extend(extra);
        rows.sort_by(|a, b| a.key.cmp(&b.key));
    }
    Ok(ResultTable {
        keys: keys.to_vec(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Deltas

/// Per-model `a − b` over the shared model set, which must be identical.
pub fn delta(scores: &ModelScores, a: &str, b: &str, category: Category) -> Result<Vec<(String, f64)>, AnalysisError> {
    let ma = scores.models(a, category);
    let mb = scores.models(b, category);
    if ma != mb {
        let only_a: Vec<_> = ma.difference(&mb).cloned().collect();
        let only_b: Vec<_> = mb.difference(&ma).cloned().collect();
        return Err(AnalysisError::ModelSetMismatch {
            a: a.into(),
            b: b.into(),
            detail: format!("only in {a}: {only_a:?}; only in {b}: {only_b:?}"),
        });
    }
    if ma.is_empty() {
        return Err(AnalysisError::EmptyGroup(format!("{a} vs {b} {category}")));
    }
    Ok(ma
        .into_iter()
        .map(|m| {
            let d = scores.value(&m, a, category).unwrap_or_default() - scores.value(&m, b, category).unwrap_or_default();
            (m, d)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intervention {
    AdMinusBase,
    ApMinusBase,
    ConceptOnAp,
}

impl Intervention {
    pub const ALL: [Intervention; 3] = [
        Intervention::AdMinusBase,
        Intervention::ApMinusBase,
        Intervention::ConceptOnAp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Intervention::AdMinusBase => "AD-Base",
            Intervention::ApMinusBase => "AP-Base",
            Intervention::ConceptOnAp => "+C on AP",
        }
    }

    /// `(minuend, subtrahend)` condition families.
    pub fn conditions(self) -> (&'static str, &'static str) {
        match self {
            Intervention::AdMinusBase => (families::AD, families::BASE),
            Intervention::ApMinusBase => (families::AP, families::BASE),
            Intervention::ConceptOnAp => (families::AP_CONCEPT, families::AP),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSeries {
    pub category: Category,
    pub intervention: Intervention,
    pub per_model: Vec<(String, f64)>,
    pub mean: f64,
}

/// All three interventions for FF, BD and HD.
pub fn delta_table(scores: &ModelScores) -> Result<Vec<DeltaSeries>, AnalysisError> {
    let mut out = Vec::with_capacity(9);
    for category in Category::HEADLINE {
        for intervention in Intervention::ALL {
            let (a, b) = intervention.conditions();
            let per_model = delta(scores, a, b, category)?;
            let mean = per_model.iter().map(|(_, d)| d).sum::<f64>() / per_model.len() as f64;
            out.push(DeltaSeries {
                category,
                intervention,
                per_model,
                mean,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Grouped statistics

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {}", format_fixed(self.mean, 1), format_fixed(self.std, 1))
    }
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd, AnalysisError> {
    let n = values.len();
    if n < 2 {
        return Err(AnalysisError::GroupTooSmall {
            what: "standard deviation".into(),
            n,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(MeanStd {
        n,
        mean,
        std: (ss / (n - 1) as f64).sqrt(),
    })
}

/// Mean ± sample std across models of one condition in one category.
pub fn grouped_mean_std(scores: &ModelScores, condition: &str, category: Category) -> Result<MeanStd, AnalysisError> {
    let v: Vec<f64> = scores.values(condition, category).into_iter().map(|(_, x)| x).collect();
    mean_std(&v).map_err(|e| match e {
        AnalysisError::GroupTooSmall { n, .. } => AnalysisError::GroupTooSmall {
            what: format!("{condition} {category}"),
            n,
        },
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Chi-square

/// Rows: correct, incorrect. Columns: gold pos, gold neg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Contingency2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Contingency2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Contingency2x2 { a, b, c, d }
    }

    pub fn transpose(self) -> Self {
        Contingency2x2::new(self.a, self.c, self.b, self.d)
    }

    pub fn swap_rows(self) -> Self {
        Contingency2x2::new(self.c, self.d, self.a, self.b)
    }

    pub fn swap_columns(self) -> Self {
        Contingency2x2::new(self.b, self.a, self.d, self.c)
    }
}

/// Pearson statistic without continuity correction, one degree of freedom.
pub fn chi_square(t: Contingency2x2) -> Result<f64, AnalysisError> {
    let cells = [t.a as f64, t.b as f64, t.c as f64, t.d as f64];
    let rows = [cells[0] + cells[1], cells[2] + cells[3]];
    let cols = [cells[0] + cells[2], cells[1] + cells[3]];
    if rows.contains(&0.0) || cols.contains(&0.0) {
        return Err(AnalysisError::DegenerateMarginal([t.a, t.b, t.c, t.d]));
    }
    let n = rows[0] + rows[1];
    let mut stat = 0.0;
    for (i, &obs) in cells.iter().enumerate() {
        let expected = rows[i / 2] * cols[i % 2] / n;
        stat += (obs - expected).powi(2) / expected;
    }
    Ok(stat)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAsymmetry {
    pub n_pos: usize,
    pub n_neg: usize,
    pub acc_pos: f64,
    pub acc_neg: f64,
    pub predicted_pos: usize,
    pub predicted_neg: usize,
    /// Records without a usable prediction.
    pub unanswered: usize,
    pub table: Contingency2x2,
    /// `None` when a marginal is zero.
    pub chi_square: Option<f64>,
}

/// Accuracy by gold class, predicted-label histogram and correctness × class chi-square.
pub fn class_asymmetry(records: &[EvalRecord], split: Option<Split>) -> Result<ClassAsymmetry, AnalysisError> {
    let scoped: Vec<&EvalRecord> = records
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    let count = |f: &dyn Fn(&EvalRecord) -> bool| scoped.iter().filter(|r| f(r)).count();
    let n_pos = count(&|r| r.gold == Label::Pos);
    let n_neg = count(&|r| r.gold == Label::Neg);
    if n_pos == 0 {
        return Err(AnalysisError::MissingClass(Label::Pos));
    }
    if n_neg == 0 {
        return Err(AnalysisError::MissingClass(Label::Neg));
    }
    let tp = count(&|r| r.gold == Label::Pos && r.correct);
    let tn = count(&|r| r.gold == Label::Neg && r.correct);
    let table = Contingency2x2::new(tp as u64, tn as u64, (n_pos - tp) as u64, (n_neg - tn) as u64);
    Ok(ClassAsymmetry {
        n_pos,
        n_neg,
        acc_pos: 100.0 * tp as f64 / n_pos as f64,
        acc_neg: 100.0 * tn as f64 / n_neg as f64,
        predicted_pos: count(&|r| r.predicted == Some(Label::Pos)),
        predicted_neg: count(&|r| r.predicted == Some(Label::Neg)),
        unanswered: count(&|r| r.predicted.is_none()),
        table,
        chi_square: chi_square(table).ok(),
    })
}

// ---------------------------------------------------------------------------
// Capacity tiers

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub model: String,
    pub tier: String,
    pub measure: String,
    pub gain: f64,
}

pub fn load_capacity_csv(path: &Path) -> Result<Vec<CapacityRow>, AnalysisError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| AnalysisError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    rdr.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| AnalysisError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Mean ± std of gains per (tier, measure), in first-appearance order.
pub fn capacity_summary(rows: &[CapacityRow]) -> Vec<(String, String, Result<MeanStd, AnalysisError>)> {
    let mut order: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.tier.clone(), r.measure.clone());
        if !order.contains(&k) {
            order.push(k);
        }
    }
    order
        .into_iter()
        .map(|(tier, measure)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.tier == tier && r.measure == measure)
                .map(|r| r.gain)
                .collect();
            let s = mean_std(&v);
            (tier, measure, s)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableKind {
    Table1,
    Fig2,
    Grounded,
    Shuffle,
    Asymmetry,
    Capacity,
}

impl TableKind {
    pub const ALL: [TableKind; 6] = [
        TableKind::Table1,
        TableKind::Fig2,
        TableKind::Grounded,
        TableKind::Shuffle,
        TableKind::Asymmetry,
        TableKind::Capacity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Table1 => "table1",
            TableKind::Fig2 => "fig2",
            TableKind::Grounded => "grounded",
            TableKind::Shuffle => "shuffle",
            TableKind::Asymmetry => "asymmetry",
            TableKind::Capacity => "capacity",
        }
    }
}

impl FromStr for TableKind {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TableKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AnalysisError::UnknownTable(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format {s:?}")),
        }
    }
}

/// A rendered table: header plus string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        let mut out = line(&self.header);
        out.push_str(&line(&vec!["---".to_string(); self.header.len()]));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // writing to memory cannot fail
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 input")
    }
}

/// Everything a report can draw on.
#[derive(Debug, Clone, Default)]
pub struct ReportInput {
    pub scores: ModelScores,
    pub records: Vec<EvalRecord>,
    pub capacity: Vec<CapacityRow>,
}

impl ReportInput {
    pub fn from_records(records: Vec<EvalRecord>) -> Self {
        ReportInput {
            scores: ModelScores::from_records(&records),
            records,
            capacity: Vec::new(),
        }
    }
}

const NA: &str = "n/a";

fn fixed_or_na(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format_fixed(x, 1))
}

fn mean_std_cell(scores: &ModelScores, condition: &str, category: Category) -> String {
    let v = scores.values(condition, category);
    match v.len() {
        0 => NA.into(),
        1 => format!("{} ± {NA}", format_fixed(v[0].1, 1)),
        _ => grouped_mean_std(scores, condition, category).map_or_else(|_| NA.into(), |s| s.to_string()),
    }
}

fn table1(input: &ReportInput) -> Table {
    let mut t = Table::new("table1", &["Condition", "FF", "BD", "HD", "Models", "Parse failures (%)"]);
    let rows = [
        ("C-G (AP)", families::AP),
        ("C-G (AD)", families::AD),
        ("C-G + Concept (AP + C)", families::AP_CONCEPT),
        ("C-G + Concept (AD + C)", families::AD_CONCEPT),
        ("Minimal-Context Grammar", families::BASE),
        ("Category Permutation", families::SHUFFLE_CAT),
        ("Sequence Permutation", families::SHUFFLE_SEQ),
    ];
    let present = input.scores.conditions();
    for (label, cond) in rows {
        if !present.contains(cond) {
            continue;
        }
        let mut row = vec![label.to_string()];
        let mut models = BTreeSet::new();
        for cat in Category::HEADLINE {
            row.push(fixed_or_na(pooled(&input.scores, cond, cat).ok()));
            models.extend(input.scores.models(cond, cat));
        }
        row.push(models.len().to_string());
        row.push(fixed_or_na(input.scores.parse_failure_rate(cond)));
        t.rows.push(row);
    }
    t
}

fn fig2(input: &ReportInput) -> Table {
    let mut t = Table::new("fig2", &["Category", "Intervention", "Model", "Delta (pp)"]);
    for category in Category::HEADLINE {
        for intervention in Intervention::ALL {
            let (a, b) = intervention.conditions();
            let Ok(per_model) = delta(&input.scores, a, b, category) else {
                continue;
            };
            let mean = per_model.iter().map(|(_, d)| d).sum::<f64>() / per_model.len() as f64;
            for (model, d) in per_model.iter().map(|(m, d)| (m.as_str(), *d)).chain([("mean", mean)]) {
                t.rows.push(vec![
                    category.to_string(),
                    intervention.label().to_string(),
                    model.to_string(),
                    format_fixed(d, 1),
                ]);
            }
        }
    }
    t
}

fn grouped(input: &ReportInput, name: &str, rows: &[(&str, &str)], cats: &[Category]) -> Table {
    let mut header = vec!["Experiment"];
    header.extend(cats.iter().map(|c| c.as_str()));
    header.push("Models");
    header.push("Parse failures (%)");
    let mut t = Table::new(name, &header);
    let present = input.scores.conditions();
    for (label, cond) in rows {
        if !present.contains(cond) {
            continue;
        }
        let mut row = vec![label.to_string()];
        let mut models = BTreeSet::new();
        for &cat in cats {
            row.push(mean_std_cell(&input.scores, cond, cat));
            models.extend(input.scores.models(cond, cat));
        }
        row.push(models.len().to_string());
        row.push(fixed_or_na(input.scores.parse_failure_rate(cond)));
        t.rows.push(row);
    }
    t
}

fn asymmetry(input: &ReportInput) -> Table {
    let mut t = Table::new(
        "asymmetry",
        &[
            "Split",
            "Pos acc (%)",
            "Neg acc (%)",
            "Gap (pp)",
            "Predicted pos",
            "Predicted neg",
            "Unanswered",
            "Chi-square",
        ],
    );
    let scopes = Split::ALL.iter().map(|&s| (s.to_string(), Some(s))).chain([("ALL".to_string(), None)]);
    for (label, split) in scopes {
        let Ok(a) = class_asymmetry(&input.records, split) else {
            continue;
        };
        t.rows.push(vec![
            label,
            format_fixed(a.acc_pos, 1),
            format_fixed(a.acc_neg, 1),
            format_fixed(a.acc_pos - a.acc_neg, 1),
            a.predicted_pos.to_string(),
            a.predicted_neg.to_string(),
            a.unanswered.to_string(),
            fixed_or_na(a.chi_square),
        ]);
    }
    t
}

fn capacity(input: &ReportInput) -> Table {
    let mut t = Table::new("capacity", &["Tier", "Measure", "Models", "Gain (pp)"]);
    for (tier, measure, s) in capacity_summary(&input.capacity) {
        let models = input
            .capacity
            .iter()
            .filter(|r| r.tier == tier && r.measure == measure)
            .count();
        t.rows.push(vec![
            tier,
            measure,
            models.to_string(),
            s.map_or_else(|_| NA.into(), |s| s.to_string()),
        ]);
    }
    t
}

pub fn build_table(input: &ReportInput, kind: TableKind) -> Table {
    match kind {
        TableKind::Table1 => table1(input),
        TableKind::Fig2 => fig2(input),
        TableKind::Grounded => grouped(
            input,
            "grounded",
            &[
                ("Action Description", families::AD_GROUNDED),
                ("Action Program", families::AP_GROUNDED),
            ],
            &[Category::Bd, Category::Ff, Category::Hd],
        ),
        TableKind::Shuffle => grouped(
            input,
            "shuffle",
            &[
                ("Categories Shuffle", families::SHUFFLE_CAT),
                ("Test Sequence Shuffle", families::SHUFFLE_SEQ),
            ],
            &[Category::Bd, Category::Ff],
        ),
        TableKind::Asymmetry => asymmetry(input),
        TableKind::Capacity => capacity(input),
    }
}

/// Writes one file per table. Markdown reports also get `fig2_points.csv`
/// when the delta table is requested.
pub fn emit_report(
    input: &ReportInput,
    kinds: &[TableKind],
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, AnalysisError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<(), AnalysisError> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    for &kind in kinds {
        let t = build_table(input, kind);
        match format {
            ReportFormat::Markdown => {
                write(format!("{}.md", t.name), t.to_markdown())?;
                if kind == TableKind::Fig2 {
                    write("fig2_points.csv".into(), t.to_csv())?;
                }
            }
            ReportFormat::Csv => write(format!("{}.csv", t.name), t.to_csv())?,
        }
    }
    Ok(written)
}
