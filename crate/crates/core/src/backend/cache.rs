//! Content-addressed response cache.
//!
//! Entries live at `{dir}/{key[..2]}/{key}.json` and are written to a
//! temporary file first, then renamed, so readers never see partial files.

use std::fs;
use std::path::PathBuf;

use serde_json::json;

use super::{AnswerSource, BackendError, RawAnswer};
use crate::prompt::PromptBundle;
use crate::sha256_hex;

/// Hash of the model id, both prompts and the digests of attached images.
pub fn cache_key(model: &str, bundle: &PromptBundle) -> Result<String, BackendError> {
    let images = bundle
        .images
        .iter()
        .map(|img| {
            fs::read(&img.path)
                .map(|b| sha256_hex(&b))
                .map_err(|e| BackendError::Io(format!("{}: {e}", img.path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let material = json!({
        "model": model,
        "system": bundle.system,
        "user": bundle.user,
        "images": images,
    });
    Ok(sha256_hex(material.to_string().as_bytes()))
}

pub struct CachedSource {
    inner: Box<dyn AnswerSource>,
    dir: PathBuf,
}

impl CachedSource {
    pub fn new(inner: Box<dyn AnswerSource>, dir: PathBuf) -> Self {
        CachedSource { inner, dir }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }
}

impl AnswerSource for CachedSource {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<RawAnswer, BackendError> {
        let key = cache_key(self.model_id(), bundle)?;
        let path = self.path(&key);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(mut hit) = serde_json::from_str::<RawAnswer>(&text) {
                hit.cached = true;
                return Ok(hit);
            }
            log::warn!("ignoring unreadable cache entry {}", path.display());
        }
        let answer = self.inner.complete(bundle)?;
        let io = |e: std::io::Error| BackendError::Io(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let body = serde_json::to_string(&answer).map_err(|e| BackendError::Io(e.to_string()))?;
        fs::write(&tmp, body).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(answer)
    }
}
