//! Concrete oracle backends: HTTP clients for chat and embedding services,
//! a deterministic scripted mock, response caching, and transcript
//! persistence shared by the estimation and embedding layers.

pub mod cache;
pub mod http;
pub mod mock;
pub mod transcript;

pub use cache::ResponseCache;
pub use http::HttpChatClient;
pub use mock::{Matcher, MockRule, ResponseMode, ScriptedMock, SessionScript};
pub use transcript::{Transcript, TranscriptRecord};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from oracle backends.
#[derive(Debug, Error)]
pub enum ProviderError {
    /// Transport failure, HTTP 429/5xx after retries, or a mock miss.
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    /// HTTP 401/403; never retried.
    #[error("authentication failed (status {0})")]
    AuthFailure(u16),
    /// The service replied but not in the expected shape.
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    /// A session script or cache file violates its schema.
    #[error("schema violation at {pointer}: {detail}")]
    SchemaViolation { pointer: String, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which backend realizes a text generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    RemoteChatService,
    ScriptedMock,
}

/// Settings for a text-generation oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub model_id: String,
    /// Sampling temperature passed to the service. Calls at temperature zero
    /// are cacheable; sampled calls bypass the cache.
    pub sampling_temperature: f64,
    pub max_retries: u32,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::ScriptedMock,
            model_id: "default".into(),
            sampling_temperature: 0.0,
            max_retries: 2,
        }
    }
}

/// A text-generation backend. Implementations retry transport-level failures
/// internally; one `chat` call is one logical oracle query.
pub trait ChatOracle: Send + Sync {
    /// Stable identifier used for cache keys and transcripts.
    fn id(&self) -> &str;

    /// Returns the raw generation for `prompt`.
    fn chat(&self, prompt: &str, spec: &GeneratorSpec) -> Result<String, ProviderError>;
}

#[derive(Serialize)]
struct CacheBody<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
}

/// One oracle plus the cache and transcript it is wired to.
///
/// Every call made through [`ChatSession::call`] appends exactly one
/// transcript record, cache hit or miss.
#[derive(Clone)]
pub struct ChatSession {
    oracle: Arc<dyn ChatOracle>,
    spec: GeneratorSpec,
    cache: Option<Arc<ResponseCache>>,
    transcript: Transcript,
}

impl ChatSession {
    pub fn new(oracle: Arc<dyn ChatOracle>, spec: GeneratorSpec) -> Self {
        Self {
            oracle,
            spec,
            cache: None,
            transcript: Transcript::in_memory(),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.transcript = transcript;
        self
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Issues one oracle call and transcribes it.
    ///
    /// `parse` turns the raw reply into a JSON value for the transcript plus
    /// the typed result handed back to the caller; parse failures are the
    /// caller's to represent (e.g. with `Option`), so that retry loops leave
    /// one record per attempt.
    pub fn call<T>(
        &self,
        method: &str,
        prompt: &str,
        parse: impl FnOnce(&str) -> (serde_json::Value, T),
    ) -> Result<T, ProviderError> {
        let raw = self.raw_chat(prompt)?;
        let (parsed, value) = parse(&raw);
        self.transcript
            .append(method, prompt, &raw, parsed, self.oracle.id());
        Ok(value)
    }

    fn raw_chat(&self, prompt: &str) -> Result<String, ProviderError> {
        // Sampled generations are meant to vary; only deterministic calls
        // (temperature zero) go through the cache.
        let cacheable = self.spec.sampling_temperature == 0.0;
        let key = if cacheable {
            self.cache.as_ref().map(|c| {
                let body = serde_json::to_string(&CacheBody {
                    model: &self.spec.model_id,
                    prompt,
                    temperature: self.spec.sampling_temperature,
                })
                .expect("cache body serializes");
                c.key(self.oracle.id(), &body)
            })
        } else {
            None
        };
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                return Ok(hit);
            }
        }
        let reply = self.oracle.chat(prompt, &self.spec)?;
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            cache.put(key, &reply);
        }
        Ok(reply)
    }
}
