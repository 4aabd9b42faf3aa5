//! HTTP clients for remote chat-completion services.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatOracle, GeneratorSpec, ProviderError};

/// Environment variable holding the bearer token for remote services.
pub const API_KEY_ENV: &str = "LIT_API_KEY";
/// Environment variable holding the chat endpoint URL.
pub const CHAT_URL_ENV: &str = "LIT_CHAT_URL";
/// Environment variable holding the embedding endpoint URL.
pub const EMBED_URL_ENV: &str = "LIT_EMBED_URL";

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// Client for a chat-completions endpoint.
///
/// The request body carries `model`, `messages`, and `temperature`; the raw
/// generation is the first choice's message content. Transport errors and
/// HTTP 429/5xx are retried with exponential backoff; 401/403 fail
/// immediately. Backoff sleeps on the calling thread only, so concurrent
/// callers are unaffected.
pub struct HttpChatClient {
    id: String,
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    backoff_base: Duration,
}

impl HttpChatClient {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        let url = url.into();
        Self {
            id: format!("chat:{url}"),
            url,
            api_key,
            client: reqwest::blocking::Client::new(),
            backoff_base: Duration::from_millis(500),
        }
    }

    /// Reads the endpoint URL and API key from `LIT_CHAT_URL` / `LIT_API_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var(CHAT_URL_ENV).map_err(|_| {
            ProviderError::ProviderUnavailable(format!("{CHAT_URL_ENV} is not set"))
        })?;
        Ok(Self::new(url, std::env::var(API_KEY_ENV).ok()))
    }

    /// Overrides the first backoff delay (default 0.5 s, doubling per retry).
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<Attempt, ProviderError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retryable(format!("transport error: {e}"))),
        };
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ProviderError::AuthFailure(status.as_u16()));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Ok(Attempt::Retryable(format!("http status {status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::ProviderUnavailable(format!(
                "http status {status}"
            )));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::MalformedResponse("reply has no choices".into()))?;
        Ok(Attempt::Done(content))
    }
}

enum Attempt {
    Done(String),
    Retryable(String),
}

impl ChatOracle for HttpChatClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, prompt: &str, spec: &GeneratorSpec) -> Result<String, ProviderError> {
        let body = json!({
            "model": spec.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": spec.sampling_temperature,
        });
        let mut last = String::new();
        for attempt in 0..=spec.max_retries {
            match self.post_once(&body)? {
                Attempt::Done(reply) => return Ok(reply),
                Attempt::Retryable(reason) => {
                    last = reason;
                    if attempt < spec.max_retries {
                        let delay = self.backoff_base * 2u32.pow(attempt);
                        log::warn!(
                            "chat attempt {}/{} failed ({last}); retrying in {delay:?}",
                            attempt + 1,
                            spec.max_retries + 1
                        );
                        std::thread::sleep(delay);
                    }
                }
            }
        }
        Err(ProviderError::ProviderUnavailable(format!(
            "{last} after {} attempts",
            spec.max_retries + 1
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal one-thread HTTP server answering with a scripted status
    /// sequence, for exercising the retry path without external services.
    fn serve_statuses(statuses: Vec<u16>, reply_body: String) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let hits2 = hits.clone();
        std::thread::spawn(move || {
            for (i, status) in statuses.iter().enumerate() {
                let (mut stream, _) = listener.accept().unwrap();
                hits2.fetch_add(1, Ordering::SeqCst);
                let mut buf = [0u8; 8192];
                let _ = stream.read(&mut buf);
                let body = if *status == 200 {
                    reply_body.as_str()
                } else {
                    ""
                };
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\ncontent-length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
                if *status == 200 || i + 1 == statuses.len() {
                    break;
                }
            }
        });
        (format!("http://{addr}/v1/chat"), hits)
    }

    fn fast_spec(max_retries: u32) -> GeneratorSpec {
        GeneratorSpec {
            max_retries,
            ..GeneratorSpec::default()
        }
    }

    #[test]
    fn recovers_from_transient_server_errors() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"recovered"}}]}"#;
        let (url, hits) = serve_statuses(vec![500, 500, 200], body.to_string());
        let client = HttpChatClient::new(url, None).with_backoff_base(Duration::from_millis(1));
        let reply = client.chat("hello", &fast_spec(2)).unwrap();
        assert_eq!(reply, "recovered");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_failure_is_immediate() {
        let (url, hits) = serve_statuses(vec![401, 401, 401], String::new());
        let client = HttpChatClient::new(url, Some("bad-key".into()))
            .with_backoff_base(Duration::from_millis(1));
        let err = client.chat("hello", &fast_spec(2)).unwrap_err();
        assert!(matches!(err, ProviderError::AuthFailure(401)));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhausted_retries_surface_as_unavailable() {
        let (url, hits) = serve_statuses(vec![503, 503], String::new());
        let client = HttpChatClient::new(url, None).with_backoff_base(Duration::from_millis(1));
        let err = client.chat("hello", &fast_spec(1)).unwrap_err();
        assert!(matches!(err, ProviderError::ProviderUnavailable(_)));
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }
}
