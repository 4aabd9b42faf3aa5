//! Conditional-probability estimation over a text-generation oracle.
//!
//! Node values are natural-language sentences. A conditional probability is
//! estimated by composing a prompt from a conditional part (the observed
//! nodes) and a query part, then reading the oracle's reply in one of three
//! ways: asking for the probability directly, generating a single point
//! estimate and scoring its similarity to the candidate value, or sampling a
//! list of values and counting nearest-support assignments.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::providers::{ChatSession, ProviderError};
use crate::similarity::{Metric, SimilarityError, SimilarityScore};

#[derive(Debug, Error)]
pub enum LpgmError {
    /// No usable value could be read from the reply within the retry budget.
    #[error("unparsable reply: {0}")]
    UnparsableReply(String),
    /// Not a single example could be parsed from the sampling replies.
    #[error("no parseable examples in the sampling reply")]
    EmptySampleSet,
    /// The query shape does not fit the requested method.
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// One named node and its sentence value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeBinding {
    pub name: String,
    pub value: String,
}

impl NodeBinding {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

/// The three estimation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMethod {
    /// Ask for the probability value itself (the baseline).
    Direct,
    /// Generate one value and score its similarity to the candidate.
    PointEstimate,
    /// Sample a list of values and count nearest-support assignments.
    MonteCarlo,
}

/// A conditional-probability query: target node, observed conditions, and
/// for Monte Carlo the support (all possible target values) plus the
/// requested sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalQuery {
    pub target: NodeBinding,
    pub conditions: Vec<NodeBinding>,
    pub method: QueryMethod,
    #[serde(default)]
    pub support: Vec<String>,
    #[serde(default)]
    pub sample_count: usize,
}

impl ConditionalQuery {
    pub fn direct(target: NodeBinding, conditions: Vec<NodeBinding>) -> Self {
        Self {
            target,
            conditions,
            method: QueryMethod::Direct,
            support: Vec::new(),
            sample_count: 0,
        }
    }

    pub fn point_estimate(target: NodeBinding, conditions: Vec<NodeBinding>) -> Self {
        Self {
            target,
            conditions,
            method: QueryMethod::PointEstimate,
            support: Vec::new(),
            sample_count: 0,
        }
    }

    pub fn monte_carlo(
        target: NodeBinding,
        conditions: Vec<NodeBinding>,
        support: Vec<String>,
        sample_count: usize,
    ) -> Result<Self, LpgmError> {
        if support.is_empty() {
            return Err(LpgmError::InvalidQuery(
                "monte-carlo queries need a non-empty support".into(),
            ));
        }
        if sample_count == 0 {
            return Err(LpgmError::InvalidQuery(
                "monte-carlo queries need a sample count of at least one".into(),
            ));
        }
        Ok(Self {
            target,
            conditions,
            method: QueryMethod::MonteCarlo,
            support,
            sample_count,
        })
    }
}

/// Composes the prompt for a query: a conditional part listing each observed
/// node joined by ", and ", then the method's query part. Pure function of
/// the query.
pub fn build_conditional_prompt(query: &ConditionalQuery) -> String {
    let mut prompt = String::new();
    if !query.conditions.is_empty() {
        prompt.push_str("We observe ");
        for (i, c) in query.conditions.iter().enumerate() {
            if i > 0 {
                prompt.push_str(", and ");
            }
            prompt.push_str(&c.name);
            prompt.push_str(" is ");
            prompt.push_str(&c.value);
        }
        prompt.push_str(", ");
    }
    match query.method {
        QueryMethod::Direct => {
            prompt.push_str("provide the probability of ");
            prompt.push_str(&query.target.name);
            prompt.push_str(" being ");
            prompt.push_str(&query.target.value);
            prompt.push('.');
        }
        QueryMethod::PointEstimate => {
            prompt.push_str("what do you think ");
            prompt.push_str(&query.target.name);
            prompt.push_str(" would be?");
        }
        QueryMethod::MonteCarlo => {
            prompt.push_str("what do you think ");
            prompt.push_str(&query.target.name);
            prompt.push_str(" would be? Provide ");
            prompt.push_str(&query.sample_count.to_string());
            prompt.push_str(" different examples.");
        }
    }
    prompt
}

/// Reads the first number in a reply. Accepts plain decimals and percent
/// forms ("0.7", "70%", "0.70"); percent values are divided by 100.
pub fn parse_first_number(reply: &str) -> Option<f64> {
    static PATTERN: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = PATTERN.get_or_init(|| {
        regex::Regex::new(r"([-+]?(?:\d+\.?\d*|\.\d+))\s*(%)?").expect("valid regex")
    });
    let caps = re.captures(reply)?;
    let mut value: f64 = caps[1].parse().ok()?;
    if caps.get(2).is_some() {
        value /= 100.0;
    }
    Some(value)
}

/// Splits a sampling reply into examples: one per line, leading enumeration
/// markers ("1.", "-", "*") and surrounding whitespace stripped, empty lines
/// discarded.
pub fn parse_example_list(reply: &str) -> Vec<String> {
    static MARKER: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = MARKER.get_or_init(|| regex::Regex::new(r"^(?:\d+\.|-|\*)\s*").expect("valid regex"));
    reply
        .lines()
        .filter_map(|line| {
            let trimmed = line.trim();
            let stripped = re.replace(trimmed, "");
            let stripped = stripped.trim();
            if stripped.is_empty() {
                None
            } else {
                Some(stripped.to_string())
            }
        })
        .collect()
}

/// The estimator bundles the oracle session with the smoothing constant used
/// by the Monte Carlo method.
pub struct Estimator {
    session: ChatSession,
    /// Add-alpha smoothing for Monte Carlo counts; keeps every support value
    /// at strictly positive probability so the filter cannot collapse.
    pub smoothing_alpha: f64,
}

impl Estimator {
    pub fn new(session: ChatSession) -> Self {
        Self {
            session,
            smoothing_alpha: 0.5,
        }
    }

    pub fn with_smoothing(mut self, alpha: f64) -> Self {
        self.smoothing_alpha = alpha;
        self
    }

    pub fn session(&self) -> &ChatSession {
        &self.session
    }

    /// Method 1 (baseline): ask for the probability and parse the first
    /// number, clamping into [0, 1] with a warning when it falls outside.
    pub fn estimate_direct(&self, query: &ConditionalQuery) -> Result<f64, LpgmError> {
        if query.method != QueryMethod::Direct {
            return Err(LpgmError::InvalidQuery("method must be direct".into()));
        }
        let prompt = build_conditional_prompt(query);
        let retries = self.session.spec().max_retries;
        let mut last_reply = String::new();
        for _ in 0..=retries {
            let parsed: Option<(f64, String)> =
                self.session
                    .call("direct", &prompt, |raw| match parse_first_number(raw) {
                        Some(v) => (json!(v), Some((v, raw.to_string()))),
                        None => (serde_json::Value::Null, None),
                    })?;
            match parsed {
                Some((value, _)) => {
                    if !(0.0..=1.0).contains(&value) {
                        log::warn!("direct estimate {value} outside [0, 1]; clamping");
                    }
                    return Ok(value.clamp(0.0, 1.0));
                }
                None => {
                    last_reply = format!("no number found in reply for {:?}", query.target.value);
                }
            }
        }
        Err(LpgmError::UnparsableReply(last_reply))
    }

    /// Method 2: generate one value for the target node and return its
    /// similarity to the candidate value. The raw generation is kept in the
    /// transcript.
    pub fn estimate_point(
        &self,
        query: &ConditionalQuery,
        metric: &Metric,
    ) -> Result<SimilarityScore, LpgmError> {
        if query.method != QueryMethod::PointEstimate {
            return Err(LpgmError::InvalidQuery(
                "method must be point-estimate".into(),
            ));
        }
        let prompt = build_conditional_prompt(query);
        let generated = self.session.call("point-estimate", &prompt, |raw| {
            (json!(raw), raw.to_string())
        })?;
        Ok(metric.score(&generated, &query.target.value)?)
    }

    /// Method 3: sample a list of target values, assign each to its most
    /// similar support value (ties to the lowest index), smooth the counts,
    /// and normalize. Output is a probability vector over the support.
    ///
    /// The examples are requested in one generation call; one top-up call is
    /// made when fewer than the requested count parse, and the shortfall is
    /// recorded in the transcript.
    pub fn estimate_monte_carlo(
        &self,
        query: &ConditionalQuery,
        metric: &Metric,
    ) -> Result<Vec<f64>, LpgmError> {
        if query.method != QueryMethod::MonteCarlo {
            return Err(LpgmError::InvalidQuery("method must be monte-carlo".into()));
        }
        if query.support.is_empty() {
            return Err(LpgmError::InvalidQuery("support must be non-empty".into()));
        }
        if query.sample_count == 0 {
            return Err(LpgmError::InvalidQuery(
                "sample count must be at least one".into(),
            ));
        }

        let prompt = build_conditional_prompt(query);
        let mut samples = self.session.call("monte-carlo", &prompt, |raw| {
            let samples = parse_example_list(raw);
            (json!({ "samples": samples }), samples)
        })?;

        if samples.len() < query.sample_count {
            let missing = query.sample_count - samples.len();
            let mut top_up = query.clone();
            top_up.sample_count = missing;
            let top_up_prompt = build_conditional_prompt(&top_up);
            let more = self.session.call("monte-carlo", &top_up_prompt, |raw| {
                let samples = parse_example_list(raw);
                let shortfall = missing.saturating_sub(samples.len());
                (
                    json!({ "samples": samples, "shortfall": shortfall }),
                    samples,
                )
            })?;
            samples.extend(more);
            if samples.len() < query.sample_count {
                log::warn!(
                    "monte-carlo shortfall: requested {}, obtained {}",
                    query.sample_count,
                    samples.len()
                );
            }
        }
        if samples.is_empty() {
            return Err(LpgmError::EmptySampleSet);
        }

        let mut counts = vec![0usize; query.support.len()];
        for sample in &samples {
            let mut best_idx = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, candidate) in query.support.iter().enumerate() {
                let score = metric.score(sample, candidate)?.value();
                if score > best {
                    best = score;
                    best_idx = i;
                }
            }
            counts[best_idx] += 1;
        }

        let alpha = self.smoothing_alpha;
        let total = samples.len() as f64 + alpha * query.support.len() as f64;
        Ok(counts.iter().map(|&c| (c as f64 + alpha) / total).collect())
    }
}
