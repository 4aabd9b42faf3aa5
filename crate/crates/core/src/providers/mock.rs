//! Deterministic scripted oracle for tests and offline session replays.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Deserialize;

use super::{ChatOracle, GeneratorSpec, ProviderError};
use crate::embeddings::MockEmbeddingProvider;

/// How a rule decides whether it applies to a prompt.
#[derive(Debug, Clone)]
pub enum Matcher {
    Exact(String),
    Substring(String),
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Exact(p) => prompt == p,
            Matcher::Substring(p) => prompt.contains(p),
        }
    }
}

/// What a rule replies with.
#[derive(Debug, Clone)]
pub enum ResponseMode {
    /// Replies cycle through the list: a, b, ..., a, b, ...
    Cycle(Vec<String>),
    /// Each call emits a newline-joined list of values drawn i.i.d. from the
    /// categorical distribution given by `weights`. The list length is read
    /// from a `Provide N different examples` clause in the prompt, falling
    /// back to one line.
    SampleList {
        values: Vec<String>,
        weights: Vec<f64>,
    },
}

/// One (matcher, response) pair. Rules are tried in order; first match wins.
#[derive(Debug, Clone)]
pub struct MockRule {
    pub matcher: Matcher,
    pub mode: ResponseMode,
}

struct MockState {
    cycle_positions: Vec<usize>,
    rng: ChaCha8Rng,
}

/// Scripted stand-in for a chat service.
///
/// With a fixed seed and rule set an entire session is bitwise reproducible;
/// internal state is mutex-guarded so the mock can be shared across threads.
pub struct ScriptedMock {
    rules: Vec<MockRule>,
    state: Mutex<MockState>,
}

impl ScriptedMock {
    pub fn new(rules: Vec<MockRule>, seed: u64) -> Result<Self, ProviderError> {
        if rules.is_empty() {
            return Err(ProviderError::SchemaViolation {
                pointer: "/rules".into(),
                detail: "a scripted mock needs at least one rule".into(),
            });
        }
        for (i, rule) in rules.iter().enumerate() {
            let empty = match &rule.mode {
                ResponseMode::Cycle(r) => r.is_empty(),
                ResponseMode::SampleList { values, weights } => {
                    values.is_empty() || values.len() != weights.len()
                }
            };
            if empty {
                return Err(ProviderError::SchemaViolation {
                    pointer: format!("/rules/{i}"),
                    detail: "responses must be non-empty (and weights match values)".into(),
                });
            }
        }
        let cycle_positions = vec![0; rules.len()];
        Ok(Self {
            rules,
            state: Mutex::new(MockState {
                cycle_positions,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
        })
    }

    /// Convenience constructor: every prompt containing the pattern gets the
    /// same single reply.
    pub fn single(pattern: &str, reply: &str) -> Self {
        Self::new(
            vec![MockRule {
                matcher: Matcher::Substring(pattern.into()),
                mode: ResponseMode::Cycle(vec![reply.into()]),
            }],
            0,
        )
        .expect("one rule is valid")
    }

    fn requested_count(prompt: &str) -> usize {
        static PATTERN: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
        let re = PATTERN
            .get_or_init(|| Regex::new(r"Provide (\d+) different examples").expect("valid regex"));
        re.captures(prompt)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(1)
    }
}

impl ChatOracle for ScriptedMock {
    fn id(&self) -> &str {
        "scripted-mock"
    }

    fn chat(&self, prompt: &str, _spec: &GeneratorSpec) -> Result<String, ProviderError> {
        let idx = self
            .rules
            .iter()
            .position(|r| r.matcher.matches(prompt))
            .ok_or_else(|| {
                ProviderError::ProviderUnavailable(format!("no mock rule matches {prompt:?}"))
            })?;
        let mut state = self.state.lock().unwrap();
        match &self.rules[idx].mode {
            ResponseMode::Cycle(responses) => {
                let pos = state.cycle_positions[idx];
                state.cycle_positions[idx] = pos + 1;
                Ok(responses[pos % responses.len()].clone())
            }
            ResponseMode::SampleList { values, weights } => {
                let n = Self::requested_count(prompt);
                let total: f64 = weights.iter().sum();
                let mut lines = Vec::with_capacity(n);
                for _ in 0..n {
                    let mut x: f64 = state.rng.gen::<f64>() * total;
                    let mut chosen = values.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        if x < *w {
                            chosen = i;
                            break;
                        }
                        x -= w;
                    }
                    lines.push(values[chosen].clone());
                }
                Ok(lines.join("\n"))
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    seed: u64,
    rules: Vec<ScriptRule>,
    #[serde(default)]
    embeddings: Option<ScriptEmbeddings>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptRule {
    #[serde(rename = "match")]
    matcher: ScriptMatcher,
    #[serde(default)]
    responses: Option<Vec<String>>,
    #[serde(default)]
    sample: Option<ScriptSample>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptMatcher {
    kind: String,
    pattern: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptSample {
    values: Vec<String>,
    weights: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptEmbeddings {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    #[serde(default)]
    default: Option<Vec<f64>>,
}

/// A recorded session: chat rules plus, optionally, an embedding table, so a
/// whole tracker run can replay without live models.
#[derive(Debug)]
pub struct SessionScript {
    seed: u64,
    rules: Vec<MockRule>,
    embeddings: Option<ScriptEmbeddings>,
}

impl SessionScript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let contents = std::fs::read_to_string(path)?;
        Self::parse(&contents)
    }

    pub fn parse(contents: &str) -> Result<Self, ProviderError> {
        let file: ScriptFile =
            serde_json::from_str(contents).map_err(|e| ProviderError::SchemaViolation {
                pointer: "/".into(),
                detail: e.to_string(),
            })?;
        if file.rules.is_empty() {
            return Err(ProviderError::SchemaViolation {
                pointer: "/rules".into(),
                detail: "rules must be non-empty".into(),
            });
        }
        let mut rules = Vec::with_capacity(file.rules.len());
        for (i, rule) in file.rules.into_iter().enumerate() {
            let matcher = match rule.matcher.kind.as_str() {
                "exact" => Matcher::Exact(rule.matcher.pattern),
                "substring" => Matcher::Substring(rule.matcher.pattern),
                other => {
                    return Err(ProviderError::SchemaViolation {
                        pointer: format!("/rules/{i}/match/kind"),
                        detail: format!("unknown matcher kind {other:?}"),
                    })
                }
            };
            let mode = match (rule.responses, rule.sample) {
                (Some(responses), None) => ResponseMode::Cycle(responses),
                (None, Some(sample)) => ResponseMode::SampleList {
                    values: sample.values,
                    weights: sample.weights,
                },
                _ => {
                    return Err(ProviderError::SchemaViolation {
                        pointer: format!("/rules/{i}"),
                        detail: "exactly one of `responses` or `sample` is required".into(),
                    })
                }
            };
            rules.push(MockRule { matcher, mode });
        }
        if let Some(emb) = &file.embeddings {
            if emb.dimension == 0 {
                return Err(ProviderError::SchemaViolation {
                    pointer: "/embeddings/dimension".into(),
                    detail: "dimension must be positive".into(),
                });
            }
            for (token, v) in &emb.vectors {
                if v.len() != emb.dimension {
                    return Err(ProviderError::SchemaViolation {
                        pointer: format!("/embeddings/vectors/{token}"),
                        detail: format!("expected {} entries, got {}", emb.dimension, v.len()),
                    });
                }
            }
        }
        Ok(Self {
            seed: file.seed,
            rules,
            embeddings: file.embeddings,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Mock whose rules reproduce the recorded session. `seed_override`
    /// replaces the script's own seed when set.
    pub fn chat_mock(&self, seed_override: Option<u64>) -> Result<ScriptedMock, ProviderError> {
        ScriptedMock::new(self.rules.clone(), seed_override.unwrap_or(self.seed))
    }

    /// Embedding table bundled with the script, when present.
    pub fn embedding_provider(&self) -> Result<Option<MockEmbeddingProvider>, ProviderError> {
        let Some(emb) = &self.embeddings else {
            return Ok(None);
        };
        let mut provider =
            MockEmbeddingProvider::new(emb.dimension, emb.vectors.clone()).map_err(|e| {
                ProviderError::SchemaViolation {
                    pointer: "/embeddings".into(),
                    detail: e.to_string(),
                }
            })?;
        if let Some(default) = &emb.default {
            provider = provider.with_default(default.clone()).map_err(|e| {
                ProviderError::SchemaViolation {
                    pointer: "/embeddings/default".into(),
                    detail: e.to_string(),
                }
            })?;
        }
        Ok(Some(provider))
    }
}
