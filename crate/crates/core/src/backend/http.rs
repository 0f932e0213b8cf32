//! The two HTTP wire dialects with retrying, rate-limit aware delivery.

use std::fs;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};

use super::{AnswerSource, BackendConfig, BackendError, BackendKind, InFlightLimit, RawAnswer};
use crate::prompt::PromptBundle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Connect(String),
    Other(String),
}

/// One POST of a JSON body. Implementations must not retry on their own.
pub trait Transport: Send + Sync {
    fn post(&self, req: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportFailure>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post(&self, req: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportFailure> {
        let mut builder = self.client.post(&req.url).timeout(timeout).body(req.body.clone());
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else if e.is_connect() {
                TransportFailure::Connect(e.to_string())
            } else {
                TransportFailure::Other(e.to_string())
            }
        };
        let resp = builder.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify)?;
        Ok(HttpResponse { status, body })
    }
}

struct EncodedImage {
    mime: &'static str,
    data: String,
}

fn encode_images(bundle: &PromptBundle) -> Result<Vec<EncodedImage>, BackendError> {
    bundle
        .images
        .iter()
        .map(|img| {
            let bytes = fs::read(&img.path).map_err(|e| BackendError::Io(format!("{}: {e}", img.path.display())))?;
            let mime = match img.path.extension().and_then(|e| e.to_str()) {
                Some("jpg" | "jpeg") => "image/jpeg",
                _ => "image/png",
            };
            Ok(EncodedImage {
                mime,
                data: B64.encode(bytes),
            })
        })
        .collect()
}

/// Chat-completions body: system message, then the user message with any
/// images as base64 data URLs.
pub fn openai_request_body(cfg: &BackendConfig, bundle: &PromptBundle) -> Result<Value, BackendError> {
    let images = encode_images(bundle)?;
    let user = if images.is_empty() {
        json!(bundle.user)
    } else {
        let mut parts = vec![json!({"type": "text", "text": bundle.user})];
        parts.extend(images.iter().map(|img| {
            json!({
                "type": "image_url",
                "image_url": {"url": format!("data:{};base64,{}", img.mime, img.data)}
            })
        }));
        Value::Array(parts)
    };
    Ok(json!({
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": bundle.system},
            {"role": "user", "content": user},
        ],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
        "stream": false,
    }))
}

/// generateContent body: system instruction, then one user turn whose parts
/// are the text followed by inline image data.
pub fn gemini_request_body(cfg: &BackendConfig, bundle: &PromptBundle) -> Result<Value, BackendError> {
    let images = encode_images(bundle)?;
    let mut parts = vec![json!({"text": bundle.user})];
    parts.extend(
        images
            .iter()
            .map(|img| json!({"inlineData": {"mimeType": img.mime, "data": img.data}})),
    );
    Ok(json!({
        "systemInstruction": {"parts": [{"text": bundle.system}]},
        "contents": [{"role": "user", "parts": parts}],
        "generationConfig": {
            "temperature": cfg.temperature,
            "maxOutputTokens": cfg.max_output_tokens,
        },
    }))
}

fn openai_text(v: &Value) -> Option<String> {
    let content = v.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .concat(),
        ),
        _ => None,
    }
}

fn gemini_text(v: &Value) -> Option<String> {
    let parts = v.pointer("/candidates/0/content/parts")?.as_array()?;
    Some(
        parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .concat(),
    )
}

pub struct HttpBackend {
    cfg: BackendConfig,
    transport: Box<dyn Transport>,
    limit: InFlightLimit,
    api_key: Option<String>,
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(cfg: BackendConfig, transport: Box<dyn Transport>) -> Result<Self, BackendError> {
        cfg.validate()?;
        if cfg.kind == BackendKind::Reference {
            return Err(BackendError::Config("reference kind is not an HTTP backend".into()));
        }
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::AuthMissing(var.clone()))?),
            None => None,
        };
        Ok(HttpBackend {
            limit: InFlightLimit::new(cfg.max_in_flight),
            cfg,
            transport,
            api_key,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn build_request(&self, bundle: &PromptBundle) -> Result<HttpRequest, BackendError> {
        let endpoint = self.cfg.endpoint.as_deref().unwrap_or_default().trim_end_matches('/');
        let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
        let (url, body) = match self.cfg.kind {
            BackendKind::HttpGeminiStyle => {
                if let Some(key) = &self.api_key {
                    headers.push(("x-goog-api-key".into(), key.clone()));
                }
                let url = if endpoint.ends_with(":generateContent") {
                    endpoint.to_string()
                } else {
                    format!("{endpoint}/models/{}:generateContent", self.cfg.model)
                };
                (url, gemini_request_body(&self.cfg, bundle)?)
            }
            _ => {
                if let Some(key) = &self.api_key {
                    headers.push(("authorization".into(), format!("Bearer {key}")));
                }
                let url = if endpoint.ends_with("/chat/completions") {
                    endpoint.to_string()
                } else {
                    format!("{endpoint}/chat/completions")
                };
                (url, openai_request_body(&self.cfg, bundle)?)
            }
        };
        Ok(HttpRequest {
            url,
            headers,
            body: serde_json::to_vec(&body).map_err(|e| BackendError::Io(e.to_string()))?,
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .cfg
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.cfg.backoff_cap_ms);
        Duration::from_millis(ms)
    }
}

impl AnswerSource for HttpBackend {
    fn model_id(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<RawAnswer, BackendError> {
        if !bundle.images.is_empty() && !self.cfg.supports_images {
            return Err(BackendError::UnsupportedModality(self.cfg.model.clone()));
        }
        let request = self.build_request(bundle)?;
        let timeout = Duration::from_secs(self.cfg.timeout_secs.max(1));
        let _permit = self.limit.acquire();
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            let attempts = attempt + 1;
            let outcome = self.transport.post(&request, timeout);
            let last = match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    let v: Value = serde_json::from_str(&resp.body)
                        .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                    let text = match self.cfg.kind {
                        BackendKind::HttpGeminiStyle => gemini_text(&v),
                        _ => openai_text(&v),
                    }
                    .ok_or_else(|| BackendError::MalformedResponse("no completion text in response".into()))?;
                    return Ok(RawAnswer {
                        text,
                        latency_s: started.elapsed().as_secs_f64(),
                        status: Some(resp.status),
                        retries: attempt,
                        cached: false,
                    });
                }
                Ok(resp) if resp.status == 429 => BackendError::RateLimited { attempts },
                Ok(resp) if resp.status >= 500 => BackendError::HttpStatus {
                    status: resp.status,
                    body: resp.body,
                },
                Ok(resp) => {
                    return Err(BackendError::HttpStatus {
                        status: resp.status,
                        body: resp.body,
                    })
                }
                Err(TransportFailure::Timeout) => BackendError::Timeout { attempts },
                Err(TransportFailure::Connect(message)) => BackendError::TransportError { attempts, message },
                Err(TransportFailure::Other(message)) => {
                    return Err(BackendError::TransportError { attempts, message });
                }
            };
            if attempt >= self.cfg.max_retries {
                return Err(last);
            }
            log::warn!("{} attempt {attempts} failed: {last}; retrying", self.cfg.model);
            std::thread::sleep(self.backoff(attempt));
            attempt += 1;
        }
    }
}
