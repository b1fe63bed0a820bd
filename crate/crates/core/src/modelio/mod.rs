//! Uniform client layer for chat-completion endpoints: one stateless query
//! per cell, exponential-backoff retries, an on-disk response cache keyed by
//! request digest, a scripted mock client, and a replay client.

mod cache;
mod http;
mod mock;
mod replay;

pub use cache::ResponseCache;
pub use http::{query_with_retry, HttpClient, HttpTransport, Transport, TransportFailure};
pub use mock::{
    AttributeScript, CellSelector, ConceptScript, ExtractorScript, IdentifyScript, MockClient,
    MockFixture, RequestLogEntry,
};
pub use replay::ReplayClient;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stimulus::StimulusRecord;

/// Retry policy for transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff_ms: 250,
        }
    }
}

/// A chat-completion endpoint reachable over HTTP, or stood in for by the
/// mock/replay clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    pub id: String,
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_max_parallel() -> u32 {
    4
}

impl ModelEndpoint {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Config("model endpoint with empty id".into()));
        }
        if self.max_parallel < 1 {
            return Err(Error::Config(format!(
                "model '{}': max_parallel must be >= 1",
                self.id
            )));
        }
        if self.retry.max_attempts < 1 {
            return Err(Error::Config(format!(
                "model '{}': retry.max_attempts must be >= 1",
                self.id
            )));
        }
        Ok(())
    }
}

/// Experiment phase a query belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Identify,
    Attributes,
    /// Auxiliary term-extraction queries; cached but never part of the
    /// response log.
    Extract,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Identify => "identify",
            Phase::Attributes => "attributes",
            Phase::Extract => "extract",
        };
        f.write_str(s)
    }
}

/// A single stateless request: one optional image, one text part, optional
/// system prompt. Temperature is always zero on the wire and no conversation
/// history ever accompanies a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub image_png: Option<Vec<u8>>,
    pub prompt: String,
}

impl ChatRequest {
    pub fn with_image(image_png: Vec<u8>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            system: None,
            image_png: Some(image_png),
            prompt: prompt.into(),
        }
    }

    pub fn text_only(system: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            system: Some(system.into()),
            image_png: None,
            prompt: prompt.into(),
        }
    }
}

/// Identifies the logical cell a query belongs to. The live client ignores
/// it; the mock client uses it to look up scripted behavior.
#[derive(Debug, Clone, Copy)]
pub struct CellMeta<'a> {
    pub stimulus: Option<&'a StimulusRecord>,
    pub phase: Phase,
    pub prompt_id: u32,
    pub rep: u32,
}

/// One raw model reply for one query cell. Field order is the response-log
/// wire format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub stimulus_id: String,
    /// Empty for extractor cells, which have no stimulus.
    #[serde(default)]
    pub concept_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<crate::stimulus::StyleFamily>,
    pub model_id: String,
    pub phase: Phase,
    pub prompt_id: u32,
    pub rep: u32,
    pub raw_text: String,
    pub request_digest: String,
    pub timestamp: u64,
}

/// Digest identifying a logical query cell: model, content, prompts, and
/// repetition index all participate, so re-prompts of one cell get distinct
/// cache entries.
pub fn request_digest(model_id: &str, request: &ChatRequest, rep: u32) -> String {
    let mut hasher = Sha256::new();
    let mut field = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_be_bytes());
        hasher.update(bytes);
    };
    field(model_id.as_bytes());
    match &request.image_png {
        Some(image) => {
            let image_digest = Sha256::digest(image);
            field(&image_digest);
        }
        None => field(b""),
    }
    field(request.system.as_deref().unwrap_or("").as_bytes());
    field(request.prompt.as_bytes());
    field(&rep.to_be_bytes());
    format!("{:x}", hasher.finalize())
}

/// Wall clock used to stamp response records. Mock runs use a fixed clock so
/// their logs are byte-identical across runs.
pub trait Clock: Sync {
    fn now_unix(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_unix(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_unix(&self) -> u64 {
        self.0
    }
}

/// A client able to answer one stateless chat query.
pub trait ChatClient: Sync {
    fn query(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
        cell: &CellMeta<'_>,
    ) -> Result<String>;
}

/// Returns the cached record for this cell if present, otherwise queries the
/// client and persists the record atomically before returning it. Repeated
/// invocation for one cell issues at most one network call.
#[allow(clippy::too_many_arguments)]
pub fn cached_query(
    cache: &ResponseCache,
    client: &dyn ChatClient,
    endpoint: &ModelEndpoint,
    stimulus_id: &str,
    cell: &CellMeta<'_>,
    request: &ChatRequest,
    clock: &dyn Clock,
) -> Result<ResponseRecord> {
    let digest = request_digest(&endpoint.id, request, cell.rep);
    if let Some(record) = cache.get(&endpoint.id, &digest)? {
        return Ok(record);
    }
    let raw_text = client.query(endpoint, request, cell)?;
    let record = ResponseRecord {
        stimulus_id: stimulus_id.to_string(),
        concept_id: cell
            .stimulus
            .map(|s| s.concept_id.clone())
            .unwrap_or_default(),
        style: cell.stimulus.map(|s| s.style),
        model_id: endpoint.id.clone(),
        phase: cell.phase,
        prompt_id: cell.prompt_id,
        rep: cell.rep,
        raw_text,
        request_digest: digest,
        timestamp: clock.now_unix(),
    };
    cache.put(&record)?;
    Ok(record)
}

/// Runs `work` over `items` with at most `max_parallel` worker threads,
/// returning results in item order.
pub fn run_bounded<T, R, F>(items: &[T], max_parallel: usize, work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    assert!(max_parallel >= 1);
    let workers = max_parallel.min(items.len());
    if workers <= 1 {
        return items.iter().map(&work).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<R>> = Vec::with_capacity(items.len());
    results.resize_with(items.len(), || None);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = work(&items[i]);
                slots.lock().expect("result mutex poisoned")[i] = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
