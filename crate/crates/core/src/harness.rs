//! Condition × backend × subset runs written to an append-only JSONL log.
//!
//! A record is keyed by (problem id, gold label, condition, model). Keys
//! already present in the log are skipped, so an interrupted run resumes
//! where it stopped. Workers share one answer source; a single writer appends
//! and flushes one line per finished problem.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{build_source, AnswerSource, BackendConfig, BackendError};
use crate::dataset::{select_query, BongardProblem, Corpus, DatasetError, QueryPolicy, Split, SubsetManifest};
use crate::prompt::{build_bundle, Condition, ImageStore, PromptError, Representation};
use crate::response::{extract_answer, Dialect};
use crate::{sha256_hex, Label};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLog { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Which held-out image(s) become the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum QueryMode {
    Single(QueryPolicy),
    /// One problem instance per class: the held-out positive and the held-out negative.
    Both,
}

impl FromStr for QueryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "both" {
            return Ok(QueryMode::Both);
        }
        s.parse::<QueryPolicy>().map(QueryMode::Single).map_err(|e| e.to_string())
    }
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::Both => "both",
            QueryMode::Single(QueryPolicy::Coin) => "coin",
            QueryMode::Single(QueryPolicy::HeldOutPos) => "held-out-pos",
            QueryMode::Single(QueryPolicy::HeldOutNeg) => "held-out-neg",
        })
    }
}

impl TryFrom<String> for QueryMode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<QueryMode> for String {
    fn from(m: QueryMode) -> String {
        m.to_string()
    }
}

impl QueryMode {
    pub fn policies(self) -> Vec<QueryPolicy> {
        match self {
            QueryMode::Single(p) => vec![p],
            QueryMode::Both => vec![QueryPolicy::HeldOutPos, QueryPolicy::HeldOutNeg],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub corpus: PathBuf,
    pub manifest: PathBuf,
    pub log: PathBuf,
    pub seed: u64,
    pub conditions: Vec<Condition>,
    pub query_mode: QueryMode,
    pub images: Option<PathBuf>,
    pub backend: BackendConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    corpus: PathBuf,
    manifest: PathBuf,
    log: PathBuf,
    seed: u64,
    #[serde(default)]
    condition: Option<Condition>,
    #[serde(default)]
    conditions: Vec<Condition>,
    #[serde(default = "default_mode")]
    query_policy: QueryMode,
    #[serde(default)]
    images: Option<PathBuf>,
    backend: BackendConfig,
}

fn default_mode() -> QueryMode {
    QueryMode::Single(QueryPolicy::Coin)
}

impl RunSpec {
    /// Parses TOML; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let raw: RunFile = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut conditions = raw.conditions;
        if let Some(c) = raw.condition {
            conditions.insert(0, c);
        }
        if conditions.is_empty() {
            return Err(HarnessError::Config("no condition given".into()));
        }
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let mut backend = raw.backend;
        backend.cache_dir = backend.cache_dir.map(resolve);
        Ok(RunSpec {
            corpus: resolve(raw.corpus),
            manifest: resolve(raw.manifest),
            log: resolve(raw.log),
            seed: raw.seed,
            conditions,
            query_mode: raw.query_policy,
            images: raw.images.map(resolve),
            backend,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    Ok,
    ParseFailure,
    TransportFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub problem_id: String,
    pub split: Split,
    pub condition: String,
    pub model: String,
    pub seed: u64,
    pub predicted: Option<Label>,
    pub status: RecordStatus,
    pub gold: Label,
    pub correct: bool,
    pub latency_s: f64,
    pub raw_hash: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub type RecordKey = (String, Label, String, String);

impl EvalRecord {
    pub fn key(&self) -> RecordKey {
        (
            self.problem_id.clone(),
            self.gold,
            self.condition.clone(),
            self.model.clone(),
        )
    }
}

/// Reads a JSONL log. Truncated records (interrupted writes, which a later
/// run terminates and appends after) are ignored; any other bad line is an error.
pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path).map_err(io_err(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EvalRecord>(line) {
            Ok(r) => out.push(r),
            Err(e) if e.is_eof() => log::warn!("{}:{}: ignoring truncated record: {e}", path.display(), i + 1),
            Err(e) => {
                return Err(HarnessError::MalformedLog {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    /// Problem instances in scope for this spec.
    pub attempted: usize,
    /// Records in the log for those instances.
    pub completed: usize,
    pub skipped: usize,
    /// Backend calls made by this invocation.
    pub new: usize,
    pub correct: usize,
    pub parse_failures: usize,
    pub transport_failures: usize,
    pub accuracy: f64,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "attempted {} completed {} skipped {} new {} parse-failures {} transport-failures {} accuracy {}%",
            self.attempted,
            self.completed,
            self.skipped,
            self.new,
            self.parse_failures,
            self.transport_failures,
            crate::format_fixed(self.accuracy, 1)
        )
    }
}

struct Job {
    problem: BongardProblem,
    condition: Condition,
}

fn dialect_for(c: &Condition) -> Dialect {
    if c.representation == Representation::Image {
        Dialect::Cat
    } else {
        Dialect::PosNeg
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn evaluate(job: &Job, source: &dyn AnswerSource, store: Option<&ImageStore>, seed: u64) -> EvalRecord {
    let condition = job.condition.fingerprint();
    let shown = job.condition.prepare(&job.problem);
    let gold = job.problem.gold;
    let mut record = EvalRecord {
        problem_id: job.problem.id.clone(),
        split: job.problem.split,
        condition,
        model: source.model_id().to_string(),
        seed,
        predicted: None,
        status: RecordStatus::TransportFailure,
        gold,
        correct: false,
        latency_s: 0.0,
        raw_hash: String::new(),
        timestamp: String::new(),
        error: None,
    };
    let outcome = build_bundle(&shown, &job.condition, store)
        .map_err(|e| e.to_string())
        .and_then(|bundle| source.complete(&bundle).map_err(|e| e.to_string()));
    match outcome {
        Ok(answer) => {
            record.latency_s = answer.latency_s;
            record.raw_hash = sha256_hex(answer.text.as_bytes());
            match extract_answer(&answer.text, dialect_for(&job.condition)) {
                Ok(parsed) => {
                    record.predicted = Some(parsed.conclusion);
                    record.status = RecordStatus::Ok;
                    record.correct = parsed.conclusion == gold;
                }
                Err(fail) => {
                    record.status = RecordStatus::ParseFailure;
                    record.error = Some(fail.reason);
                }
            }
        }
        Err(message) => {
            record.raw_hash = sha256_hex(message.as_bytes());
            record.error = Some(message);
        }
    }
    record.timestamp = timestamp();
    record
}

/// Builds the problem instances for a spec and checks everything that would
/// otherwise fail on every call.
fn plan(spec: &RunSpec, model: &str) -> Result<Vec<Job>, HarnessError> {
    for c in &spec.conditions {
        c.validate()?;
        if c.needs_images() && !spec.backend.supports_images {
            return Err(HarnessError::Backend(BackendError::UnsupportedModality(model.to_string())));
        }
    }
    let corpus = Corpus::load(&spec.corpus)?;
    let manifest = SubsetManifest::load(&spec.manifest)?;
    let store = spec.images.clone().map(ImageStore::new);
    let mut jobs = Vec::new();
    for condition in &spec.conditions {
        for id in &manifest.ids {
            let raw = corpus.get(id)?;
            for policy in spec.query_mode.policies() {
                let problem = select_query(raw, policy, spec.seed)?;
                build_bundle(&condition.prepare(&problem), condition, store.as_ref())?;
                jobs.push(Job {
                    problem,
                    condition: *condition,
                });
            }
        }
    }
    Ok(jobs)
}

pub fn run(spec: &RunSpec) -> Result<RunSummary, HarnessError> {
    let source = build_source(&spec.backend)?;
    run_with_source(spec, source.as_ref())
}

/// Runs `spec` against an already constructed answer source.
pub fn run_with_source(spec: &RunSpec, source: &dyn AnswerSource) -> Result<RunSummary, HarnessError> {
    spec.backend.validate()?;
    let jobs = plan(spec, source.model_id())?;
    let existing: BTreeSet<RecordKey> = read_records(&spec.log)?.iter().map(EvalRecord::key).collect();
    let model = source.model_id().to_string();
    let key_of = |j: &Job| -> RecordKey {
        (
            j.problem.id.clone(),
            j.problem.gold,
            j.condition.fingerprint(),
            model.clone(),
        )
    };
    let in_scope: BTreeSet<RecordKey> = jobs.iter().map(key_of).collect();
    let pending: Vec<&Job> = jobs.iter().filter(|j| !existing.contains(&key_of(j))).collect();
    let skipped = jobs.len() - pending.len();

    if let Some(parent) = spec.log.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .read(true)
        .open(&spec.log)
        .map_err(io_err(&spec.log))?;
    let len = log.metadata().map_err(io_err(&spec.log))?.len();
    if len > 0 {
        // terminate a truncated final line before appending
        let mut last = [0u8; 1];
        log.seek(SeekFrom::Start(len - 1)).map_err(io_err(&spec.log))?;
        log.read_exact(&mut last).map_err(io_err(&spec.log))?;
        if last[0] != b'\n' {
            log.write_all(b"\n").map_err(io_err(&spec.log))?;
        }
    }

    let store = spec.images.clone().map(ImageStore::new);
    let workers = spec.backend.max_in_flight.max(1).min(pending.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<EvalRecord>();
    let mut write_result: Result<(), HarnessError> = Ok(());
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, store) = (&next, &pending, store.as_ref());
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = pending.get(i) else { break };
                if tx.send(evaluate(job, source, store, spec.seed)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            if write_result.is_err() {
                continue;
            }
            write_result = serde_json::to_string(&record)
                .map_err(|e| HarnessError::Io {
                    path: spec.log.clone(),
                    message: e.to_string(),
                })
                .and_then(|line| {
                    writeln!(log, "{line}")
                        .and_then(|_| log.flush())
                        .map_err(io_err(&spec.log))
                });
        }
    });
    write_result?;

    let mut latest: BTreeMap<RecordKey, EvalRecord> = BTreeMap::new();
    for r in read_records(&spec.log)? {
        let k = r.key();
        if in_scope.contains(&k) {
            latest.entry(k).or_insert(r);
        }
    }
    let completed = latest.len();
    let correct = latest.values().filter(|r| r.correct).count();
    let count = |st: RecordStatus| latest.values().filter(|r| r.status == st).count();
    Ok(RunSummary {
        attempted: jobs.len(),
        completed,
        skipped,
        new: pending.len(),
        correct,
        parse_failures: count(RecordStatus::ParseFailure),
        transport_failures: count(RecordStatus::TransportFailure),
        accuracy: if completed == 0 {
            0.0
        } else {
            100.0 * correct as f64 / completed as f64
        },
    })
}
