//! Extraction of the constrained JSON answer from raw model output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{sha256_hex, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// `Conclusion` is `pos` or `neg`.
    #[default]
    PosNeg,
    /// `Conclusion` is `cat_2` (positive) or `cat_1` (negative).
    Cat,
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos-neg" => Ok(Dialect::PosNeg),
            "cat" => Ok(Dialect::Cat),
            _ => Err(format!("unknown answer dialect {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub analysis: String,
    pub rule: String,
    pub test_image: String,
    pub conclusion: Label,
}

impl ParsedAnswer {
    /// Canonical JSON object in the requested dialect.
    pub fn to_json(&self, dialect: Dialect) -> String {
        let conclusion = match (dialect, self.conclusion) {
            (Dialect::PosNeg, l) => l.as_str(),
            (Dialect::Cat, Label::Pos) => "cat_2",
            (Dialect::Cat, Label::Neg) => "cat_1",
        };
        serde_json::json!({
            "Analysis": self.analysis,
            "Rule": self.rule,
            "Test Image": self.test_image,
            "Conclusion": conclusion,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    /// SHA-256 of the raw text.
    pub raw_hash: String,
    pub reason: String,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unparsable answer {}: {}", &self.raw_hash[..12], self.reason)
    }
}

impl std::error::Error for ParseFailure {}

/// Byte ranges of balanced `{...}` spans, outermost first, in order of their
/// opening brace. Braces inside JSON strings are ignored.
fn balanced_spans(raw: &str) -> Vec<(usize, usize)> {
    let bytes = raw.as_bytes();
    let mut spans = Vec::new();
    for start in 0..bytes.len() {
        if bytes[start] != b'{' {
            continue;
        }
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push((start, i + 1));
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

fn get_ci<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
        .map(|(_, v)| v)
}

fn text_field(obj: &Map<String, Value>, key: &str) -> String {
    match get_ci(obj, key) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    }
}

fn normalize_conclusion(value: &str, dialect: Dialect) -> Option<Label> {
    let mut v = value.trim().to_ascii_lowercase();
    if dialect == Dialect::Cat {
        if let Some(open) = v.find('(') {
            v.truncate(open);
        }
    }
    let v = v.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '_');
    match (dialect, v) {
        (Dialect::PosNeg, "pos" | "positive") => Some(Label::Pos),
        (Dialect::PosNeg, "neg" | "negative") => Some(Label::Neg),
        (Dialect::Cat, "cat_2") => Some(Label::Pos),
        (Dialect::Cat, "cat_1") => Some(Label::Neg),
        _ => None,
    }
}

/// Finds the first balanced JSON object carrying a `Conclusion` key.
pub fn extract_answer(raw: &str, dialect: Dialect) -> Result<ParsedAnswer, ParseFailure> {
    let fail = |reason: String| ParseFailure {
        raw_hash: sha256_hex(raw.as_bytes()),
        reason,
    };
    let mut saw_object = false;
    for (start, end) in balanced_spans(raw) {
        let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&raw[start..end]) else {
            continue;
        };
        saw_object = true;
        let Some(conclusion) = get_ci(&obj, "conclusion") else {
            continue;
        };
        let label = conclusion
            .as_str()
            .and_then(|s| normalize_conclusion(s, dialect))
            .ok_or_else(|| fail(format!("unrecognized conclusion {conclusion}")))?;
        return Ok(ParsedAnswer {
            analysis: text_field(&obj, "analysis"),
            rule: text_field(&obj, "rule"),
            test_image: text_field(&obj, "test image"),
            conclusion: label,
        });
    }
    Err(fail(if saw_object {
        "no JSON object with a Conclusion key".to_string()
    } else {
        "no JSON object found".to_string()
    }))
}
