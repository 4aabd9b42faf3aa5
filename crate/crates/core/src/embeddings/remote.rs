//! Client for a remote embedding service.
//!
//! The request body carries `model` and `input` (a string or an array of
//! strings); the response holds one float vector per input, in order.

use serde::Deserialize;
use serde_json::json;

use super::{
    tokenize_whitespace_lowercase, EmbedError, EmbeddingProvider, EmbeddingVector,
    TokenEmbeddingSet, Tokenization,
};
use crate::providers::http::{API_KEY_ENV, EMBED_URL_ENV};

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f64>,
}

/// Remote embedding provider.
///
/// With whitespace tokenization each token is sent as one array element and
/// embedded separately; with provider-native tokenization the whole sentence
/// is one input and the provider's single vector stands for it. Wrap in
/// [`super::CachedEmbeddings`] to avoid re-embedding repeated inputs.
pub struct RemoteEmbeddingProvider {
    id: String,
    url: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    tokenization: Tokenization,
    client: reqwest::blocking::Client,
}

impl RemoteEmbeddingProvider {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        dimension: usize,
        tokenization: Tokenization,
    ) -> Self {
        let url = url.into();
        let model = model.into();
        Self {
            id: format!("embed:{url}:{model}"),
            url,
            model,
            api_key,
            dimension,
            tokenization,
            client: reqwest::blocking::Client::new(),
        }
    }

    /// Reads the endpoint URL and API key from `LIT_EMBED_URL` / `LIT_API_KEY`.
    pub fn from_env(
        model: impl Into<String>,
        dimension: usize,
        tokenization: Tokenization,
    ) -> Result<Self, EmbedError> {
        let url = std::env::var(EMBED_URL_ENV)
            .map_err(|_| EmbedError::ProviderUnavailable(format!("{EMBED_URL_ENV} is not set")))?;
        Ok(Self::new(
            url,
            model,
            std::env::var(API_KEY_ENV).ok(),
            dimension,
            tokenization,
        ))
    }

    fn request(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = json!({ "model": self.model, "input": inputs });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| EmbedError::ProviderUnavailable(format!("transport error: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(EmbedError::ProviderUnavailable(format!(
                "http status {status}"
            )));
        }
        let parsed: EmbedResponse = resp
            .json()
            .map_err(|e| EmbedError::ProviderUnavailable(format!("malformed response: {e}")))?;
        if parsed.data.len() != inputs.len() {
            return Err(EmbedError::ProviderUnavailable(format!(
                "expected {} vectors, got {}",
                inputs.len(),
                parsed.data.len()
            )));
        }
        parsed
            .data
            .into_iter()
            .map(|item| {
                if item.embedding.len() != self.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        line: 0,
                        expected: self.dimension,
                        got: item.embedding.len(),
                    });
                }
                EmbeddingVector::new(item.embedding)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
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
        let units: Vec<String> = match self.tokenization {
            Tokenization::WhitespaceLowercase => tokenize_whitespace_lowercase(sentence),
            Tokenization::ProviderNative => vec![sentence.to_string()],
        };
        if units.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let vectors = self.request(&units)?;
        TokenEmbeddingSet::new(units.into_iter().zip(vectors).collect())
    }
}
