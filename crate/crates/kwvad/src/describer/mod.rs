//! Frame descriptions from a vision-language provider.
//!
//! A [`Describer`] reads the frame image, consults the on-disk cache, and
//! only then asks its [`Provider`]: the OpenAI-compatible HTTP client
//! ([`HttpProvider`]) or a fixed map for tests and offline runs
//! ([`StubProvider`]).

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, SubsecRound, Utc};
use kwvad_core::dataset::FrameRecord;
use kwvad_core::hash::{content_hash, ContentHasher};
use serde::{Deserialize, Serialize};

mod cache;
mod http;
mod stub;

pub use cache::DescriptionCache;
pub use http::HttpProvider;
pub use stub::StubProvider;

pub const DEFAULT_PROMPT: &str =
    "You are a surveillance monitor for urban safety. Describe the activities and objects present in this scene.";

/// Environment variable holding the provider API key, sent as a bearer token.
pub const API_KEY_ENV: &str = "KWVAD_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub prompt: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    /// First retry delay; doubles on each further retry.
    pub backoff_initial_ms: u64,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://localhost:8000".into(),
            model_id: "llama3.2-vision".into(),
            prompt: DEFAULT_PROMPT.into(),
            timeout_secs: 120,
            max_retries: 3,
            max_concurrency: 4,
            backoff_initial_ms: 1000,
            api_key: None,
        }
    }
}

impl ProviderConfig {
    pub fn prompt_hash(&self) -> u64 {
        content_hash(self.prompt.as_bytes())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.backoff_initial_ms.saturating_mul(1u64 << retry.min(30)))
    }
}

pub(crate) mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub frame_id: String,
    pub text: String,
    pub model_id: String,
    #[serde(with = "hex_u64")]
    pub prompt_hash: u64,
    pub created_at: DateTime<Utc>,
    /// Whatever generation details the server reported (model revision,
    /// finish reason, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum DescribeError {
    #[error("frame {frame_id}: cannot read image {path}: {reason}")]
    ImageRead {
        frame_id: String,
        path: PathBuf,
        reason: String,
    },
    #[error("provider unreachable after {attempts} attempts: {last_error}")]
    ProviderUnreachable { attempts: u32, last_error: String },
    #[error("provider rejected the request (HTTP {status}): {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("provider returned an empty description for frame {0}")]
    EmptyResponse(String),
    #[error("description cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
    #[error("all {count} frames failed; first error: {first}")]
    AllFailed { count: usize, first: Box<DescribeError> },
}

/// Image bytes ready to send, with the MIME type for the data URL.
#[derive(Clone, Debug)]
pub struct FrameImage {
    pub frame_id: String,
    pub bytes: Vec<u8>,
    pub mime: &'static str,
    /// Hash of the file as stored on disk.
    pub content_hash: u64,
}

/// Reads a frame. JPEG and PNG pass through; TIFF is re-encoded as PNG since
/// chat endpoints rarely accept it.
pub fn read_frame_image(frame: &FrameRecord) -> Result<FrameImage, DescribeError> {
    let path = PathBuf::from(&frame.path);
    let fail = |reason: String| DescribeError::ImageRead {
        frame_id: frame.frame_id.clone(),
        path: path.clone(),
        reason,
    };
    let bytes = std::fs::read(&path).map_err(|e| fail(e.to_string()))?;
    let content_hash = content_hash(&bytes);
    let format = image::guess_format(&bytes).map_err(|e| fail(e.to_string()))?;
    let (bytes, mime) = match format {
        image::ImageFormat::Jpeg => (bytes, "image/jpeg"),
        image::ImageFormat::Png => (bytes, "image/png"),
        image::ImageFormat::Tiff => {
            let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| fail(e.to_string()))?;
            let mut png = Vec::new();
            img.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
                .map_err(|e| fail(e.to_string()))?;
            (png, "image/png")
        }
        other => return Err(fail(format!("unsupported image format {other:?}"))),
    };
    Ok(FrameImage {
        frame_id: frame.frame_id.clone(),
        bytes,
        mime,
        content_hash,
    })
}

/// The provider's answer for one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Reply {
    pub text: String,
    pub metadata: BTreeMap<String, String>,
}

pub trait Provider: Send + Sync {
    fn describe(&self, image: &FrameImage, prompt: &str, model_id: &str) -> Result<Reply, DescribeError>;
}

/// Outcome of [`Describer::batch_describe`]: successes in input order and
/// the per-frame failures.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub records: Vec<DescriptionRecord>,
    pub failures: Vec<(String, DescribeError)>,
}

impl BatchOutcome {
    pub fn summary(&self) -> String {
        format!("{} described, {} failed", self.records.len(), self.failures.len())
    }
}

pub struct Describer {
    provider: Box<dyn Provider>,
    cache: Option<DescriptionCache>,
    config: ProviderConfig,
    provider_calls: AtomicUsize,
}

impl Describer {
    pub fn new(provider: Box<dyn Provider>, config: ProviderConfig, cache: Option<DescriptionCache>) -> Self {
        Self {
            provider,
            cache,
            config,
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Requests that reached the provider (cache hits excluded).
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    fn cache_key(&self, frame_id: &str, image_hash: u64) -> u64 {
        let mut h = ContentHasher::new();
        h.update(frame_id.as_bytes())
            .update(&[0])
            .update(&image_hash.to_le_bytes())
            .update(self.config.model_id.as_bytes())
            .update(&[0])
            .update(&self.config.prompt_hash().to_le_bytes());
        h.finish()
    }

    pub fn describe_frame(&self, frame: &FrameRecord) -> Result<DescriptionRecord, DescribeError> {
        let image = read_frame_image(frame)?;
        let key = self.cache_key(&frame.frame_id, image.content_hash);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(key) {
                return Ok(hit);
            }
        }
        self.provider_calls.fetch_add(1, Ordering::SeqCst);
        let reply = self
            .provider
            .describe(&image, &self.config.prompt, &self.config.model_id)?;
        let text = reply.text.trim().to_string();
        if text.is_empty() {
            return Err(DescribeError::EmptyResponse(frame.frame_id.clone()));
        }
        let record = DescriptionRecord {
            frame_id: frame.frame_id.clone(),
            text,
            model_id: self.config.model_id.clone(),
            prompt_hash: self.config.prompt_hash(),
            created_at: Utc::now().trunc_subsecs(3),
            metadata: reply.metadata,
        };
        if let Some(cache) = &self.cache {
            cache.put(key, &record)?;
        }
        Ok(record)
    }

    /// Describes frames with at most `max_concurrency` requests in flight.
    /// Individual failures are collected; only a batch where every frame
    /// fails is an error.
    pub fn batch_describe(&self, frames: &[FrameRecord]) -> Result<BatchOutcome, DescribeError> {
        if frames.is_empty() {
            return Ok(BatchOutcome::default());
        }
        let slots: Vec<Mutex<Option<Result<DescriptionRecord, DescribeError>>>> =
            frames.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_concurrency.clamp(1, frames.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(frame) = frames.get(i) else { break };
                    let result = self.describe_frame(frame);
                    *slots[i].lock().expect("slot poisoned") = Some(result);
                });
            }
        });

        let mut outcome = BatchOutcome::default();
        for (frame, slot) in frames.iter().zip(slots) {
            match slot.into_inner().expect("slot poisoned").expect("every slot is filled") {
                Ok(r) => outcome.records.push(r),
                Err(e) => outcome.failures.push((frame.frame_id.clone(), e)),
            }
        }
        if outcome.records.is_empty() {
            let count = outcome.failures.len();
            let first = outcome.failures.swap_remove(0).1;
            return Err(DescribeError::AllFailed {
                count,
                first: Box::new(first),
            });
        }
        Ok(outcome)
    }
}

impl DescribeError {
    /// The underlying error, looking through `AllFailed`.
    pub fn root(&self) -> &DescribeError {
        match self {
            DescribeError::AllFailed { first, .. } => first.root(),
            other => other,
        }
    }
}
