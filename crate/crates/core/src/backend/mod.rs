//! Answer sources: HTTP chat services and the offline reference reasoner.

mod cache;
mod http;
mod reference;

use std::path::PathBuf;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;

pub use cache::{cache_key, CachedSource};
pub use http::{
    gemini_request_body, openai_request_body, HttpBackend, HttpRequest, HttpResponse, ReqwestTransport, Transport,
    TransportFailure,
};
pub use reference::{jaccard, reference_classify, reference_classify_prompt, ReferenceBackend, ReferenceVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("HTTP status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("environment variable {0} holding the API key is not set")]
    AuthMissing(String),
    #[error("backend {0} cannot take image attachments")]
    UnsupportedModality(String),
    #[error("malformed service response: {0}")]
    MalformedResponse(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl BackendError {
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::AuthMissing(_) | BackendError::Config(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    HttpOpenaiStyle,
    HttpGeminiStyle,
    Reference,
}

fn default_max_tokens() -> u32 {
    2048
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    1
}
fn default_backoff_base() -> u64 {
    500
}
fn default_backoff_cap() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Required for HTTP kinds.
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub supports_images: bool,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_cap")]
    pub backoff_cap_ms: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub no_cache: bool,
}

impl BackendConfig {
    pub fn reference(model: &str) -> Self {
        BackendConfig {
            kind: BackendKind::Reference,
            endpoint: None,
            model: model.to_string(),
            api_key_env: None,
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            supports_images: false,
            backoff_base_ms: default_backoff_base(),
            backoff_cap_ms: default_backoff_cap(),
            cache_dir: None,
            no_cache: false,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.model.trim().is_empty() {
            return Err(BackendError::Config("model id is empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::Config(format!("invalid temperature {}", self.temperature)));
        }
        if self.kind != BackendKind::Reference && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
            return Err(BackendError::Config(format!("{:?} backend needs an endpoint", self.kind)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAnswer {
    /// Verbatim completion text.
    pub text: String,
    pub latency_s: f64,
    #[serde(default)]
    pub status: Option<u16>,
    #[serde(default)]
    pub retries: u32,
    #[serde(default)]
    pub cached: bool,
}

pub trait AnswerSource: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, bundle: &PromptBundle) -> Result<RawAnswer, BackendError>;
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightPermit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InFlightPermit { limit: self }
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.limit.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limit.freed.notify_one();
    }
}

/// Builds the configured source, wrapped in the on-disk cache when one is set.
pub fn build_source(cfg: &BackendConfig) -> Result<Box<dyn AnswerSource>, BackendError> {
    cfg.validate()?;
    let inner: Box<dyn AnswerSource> = match cfg.kind {
        BackendKind::Reference => Box::new(ReferenceBackend::new(&cfg.model)),
        BackendKind::HttpOpenaiStyle | BackendKind::HttpGeminiStyle => {
            Box::new(HttpBackend::new(cfg.clone(), Box::new(ReqwestTransport::new()?))?)
        }
    };
    match (&cfg.cache_dir, cfg.no_cache) {
        (Some(dir), false) => Ok(Box::new(CachedSource::new(inner, dir.clone()))),
        _ => Ok(inner),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    use super::*;

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::reference("ref");
        assert!(c.validate().is_ok());
        c.max_in_flight = 0;
        assert!(c.validate().is_err());
        let mut h = BackendConfig::reference("m");
        h.kind = BackendKind::HttpOpenaiStyle;
        assert!(matches!(h.validate(), Err(BackendError::Config(_))));
        h.endpoint = Some("http://localhost:11434/v1".into());
        assert!(h.validate().is_ok());
    }

    #[test]
    fn toml_defaults() {
        let c: BackendConfig = toml::from_str("kind = \"reference\"\nmodel = \"ref\"\n").unwrap();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_in_flight, 1);
        assert!(toml::from_str::<BackendConfig>("kind = \"reference\"\nmodel = \"r\"\ntemp = 1\n").is_err());
    }

    #[test]
    fn limiter_bounds_concurrency() {
        let limit = Arc::new(InFlightLimit::new(3));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..12 {
                let (limit, active, peak) = (limit.clone(), active.clone(), peak.clone());
                s.spawn(move || {
                    let _p = limit.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert!(peak.load(Ordering::SeqCst) >= 2);
    }
}
