//! Token- and sentence-level vector embeddings behind a uniform provider trait.
//!
//! Three backends are provided: a static word-vector file loader
//! ([`word_vectors::WordVectorProvider`]), a remote embedding-service client
//! ([`remote::RemoteEmbeddingProvider`]), and a table-driven mock
//! ([`MockEmbeddingProvider`]) for deterministic tests. Sentence embeddings
//! are always the arithmetic mean of the token vectors.

pub mod remote;
pub mod word_vectors;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from embedding providers.
#[derive(Debug, Error)]
pub enum EmbedError {
    /// The input sentence was empty (or whitespace-only).
    #[error("empty input sentence")]
    EmptyInput,
    /// Every token of the sentence was out of vocabulary.
    #[error("no token of {0:?} is known to the provider")]
    AllTokensUnknown(String),
    /// The provider could not be reached or returned an unusable response.
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    /// The word-vector file header is not `<count> <dimension>`.
    #[error("malformed word-vector header: {0}")]
    MalformedHeader(String),
    /// A vector's length disagrees with the declared dimension.
    #[error("dimension mismatch at line {line}: expected {expected}, got {got}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    /// A vector entry failed to parse or is not finite.
    #[error("malformed vector entry at line {line}: {detail}")]
    MalformedVector { line: usize, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A fixed-dimension real vector. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps raw values, rejecting NaN/Inf entries.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(EmbedError::MalformedVector {
                line: 0,
                detail: format!("non-finite entry {bad}"),
            });
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Ordered per-token vectors for one sentence.
#[derive(Debug, Clone)]
pub struct TokenEmbeddingSet {
    tokens: Vec<(String, EmbeddingVector)>,
}

impl TokenEmbeddingSet {
    /// Non-empty, dimension-consistent set of token vectors.
    pub fn new(tokens: Vec<(String, EmbeddingVector)>) -> Result<Self, EmbedError> {
        let mut dims = tokens.iter().map(|(_, v)| v.dimension());
        if let Some(first) = dims.next() {
            if dims.any(|d| d != first) {
                return Err(EmbedError::DimensionMismatch {
                    line: 0,
                    expected: first,
                    got: 0,
                });
            }
        }
        Ok(Self { tokens })
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[(String, EmbeddingVector)] {
        &self.tokens
    }

    pub fn vectors(&self) -> impl Iterator<Item = &EmbeddingVector> {
        self.tokens.iter().map(|(_, v)| v)
    }

    /// Arithmetic mean of the token vectors.
    pub fn mean(&self) -> EmbeddingVector {
        let n = self.tokens.len() as f64;
        let dim = self.tokens[0].1.dimension();
        let mut acc = vec![0.0; dim];
        for (_, v) in &self.tokens {
            for (a, x) in acc.iter_mut().zip(v.values()) {
                *a += x;
            }
        }
        for a in &mut acc {
            *a /= n;
        }
        EmbeddingVector(acc)
    }
}

/// How a provider splits sentences into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenization {
    /// Lowercase, split on whitespace, strip ASCII punctuation from token edges.
    WhitespaceLowercase,
    /// The provider decides; a remote service treats the whole input as one unit.
    ProviderNative,
}

/// Which backend realizes an embedding provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EmbeddingProviderKind {
    RemoteService { model: String },
    StaticWordVectors { path: String },
    ScriptedMock,
}

/// Declarative description of an embedding provider, used by configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    #[serde(flatten)]
    pub kind: EmbeddingProviderKind,
    pub dimension: usize,
    pub tokenization: Tokenization,
}

impl EmbeddingProviderSpec {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension == 0 {
            return Err(EmbedError::MalformedHeader(
                "declared dimension must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform oracle interface over embedding backends.
///
/// Implementations must be safe to call from multiple threads.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier used for cache keys and transcripts.
    fn id(&self) -> &str;

    /// Dimension of every vector this provider returns.
    fn dimension(&self) -> usize;

    /// One vector per token of `sentence` under the provider's tokenization.
    ///
    /// Out-of-vocabulary tokens are dropped; if all tokens are dropped the
    /// call fails with [`EmbedError::AllTokensUnknown`].
    fn embed_tokens(&self, sentence: &str) -> Result<TokenEmbeddingSet, EmbedError>;
}

/// Lowercases, splits on whitespace, and strips ASCII punctuation from token
/// edges. Tokens that become empty are dropped.
pub fn tokenize_whitespace_lowercase(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Mean of the token vectors from [`EmbeddingProvider::embed_tokens`].
pub fn embed_sentence(
    provider: &dyn EmbeddingProvider,
    sentence: &str,
) -> Result<EmbeddingVector, EmbedError> {
    let tokens = provider.embed_tokens(sentence)?;
    Ok(tokens.mean())
}

/// Table-driven provider for tests and scripted replays.
///
/// Unknown tokens fall back to `default` when set, otherwise they are
/// dropped like any out-of-vocabulary token.
#[derive(Debug, Clone)]
pub struct MockEmbeddingProvider {
    id: String,
    dimension: usize,
    table: HashMap<String, EmbeddingVector>,
    default: Option<EmbeddingVector>,
}

impl MockEmbeddingProvider {
    pub fn new(dimension: usize, table: HashMap<String, Vec<f64>>) -> Result<Self, EmbedError> {
        let mut checked = HashMap::with_capacity(table.len());
        for (token, values) in table {
            if values.len() != dimension {
                return Err(EmbedError::DimensionMismatch {
                    line: 0,
                    expected: dimension,
                    got: values.len(),
                });
            }
            checked.insert(token, EmbeddingVector::new(values)?);
        }
        Ok(Self {
            id: "mock-embeddings".into(),
            dimension,
            table: checked,
            default: None,
        })
    }

    pub fn with_default(mut self, values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                line: 0,
                expected: self.dimension,
                got: values.len(),
            });
        }
        self.default = Some(EmbeddingVector::new(values)?);
        Ok(self)
    }
}

impl EmbeddingProvider for MockEmbeddingProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_tokens(&self, sentence: &str) -> Result<TokenEmbeddingSet, EmbedError> {
        if sentence.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let mut out = Vec::new();
        for token in tokenize_whitespace_lowercase(sentence) {
            match self.table.get(&token).or(self.default.as_ref()) {
                Some(v) => out.push((token, v.clone())),
                None => log::debug!("mock embeddings: dropping unknown token {token:?}"),
            }
        }
        if out.is_empty() {
            return Err(EmbedError::AllTokensUnknown(sentence.to_string()));
        }
        TokenEmbeddingSet::new(out)
    }
}

/// Caching wrapper keyed by `(provider-id, exact input string)`.
///
/// Oracle calls are expensive and the filter re-embeds intention sentences
/// every step; the map serializes writes and is shared across threads. Every
/// lookup (hit or miss) appends one transcript record when a transcript is
/// attached.
pub struct CachedEmbeddings {
    inner: Arc<dyn EmbeddingProvider>,
    cache: Mutex<HashMap<String, TokenEmbeddingSet>>,
    transcript: Option<crate::providers::Transcript>,
}

impl CachedEmbeddings {
    pub fn new(inner: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            transcript: None,
        }
    }

    pub fn with_transcript(mut self, transcript: crate::providers::Transcript) -> Self {
        self.transcript = Some(transcript);
        self
    }

    fn record(&self, sentence: &str, set: &TokenEmbeddingSet, hit: bool) {
        if let Some(t) = &self.transcript {
            let vectors: Vec<&[f64]> = set.vectors().map(EmbeddingVector::values).collect();
            t.append(
                "embed",
                sentence,
                if hit { "<cache-hit>" } else { "<provider>" },
                serde_json::json!({ "vectors": vectors }),
                self.inner.id(),
            );
        }
    }
}

impl EmbeddingProvider for CachedEmbeddings {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_tokens(&self, sentence: &str) -> Result<TokenEmbeddingSet, EmbedError> {
        let key = format!("{}\u{0}{}", self.inner.id(), sentence);
        if let Some(hit) = self.cache.lock().unwrap().get(&key).cloned() {
            self.record(sentence, &hit, true);
            return Ok(hit);
        }
        let set = self.inner.embed_tokens(sentence)?;
        self.cache.lock().unwrap().insert(key, set.clone());
        self.record(sentence, &set, false);
        Ok(set)
    }
}
