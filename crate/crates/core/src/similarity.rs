//! Sentence-pair similarity scores and their conversion to likelihoods.
//!
//! Two metric kinds: cosine between mean-of-token sentence embeddings
//! (mean-cos) and a greedy token-matching F1 in the BERTScore family,
//! computed without IDF weighting or baseline rescaling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{EmbedError, EmbeddingProvider, EmbeddingVector};

#[derive(Debug, Error)]
pub enum SimilarityError {
    /// Cosine against the zero vector is undefined.
    #[error("zero-norm vector")]
    ZeroNormVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("similarity score {0} outside [-1, 1]")]
    ScoreOutOfRange(f64),
}

/// A similarity value in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn new(value: f64) -> Result<Self, SimilarityError> {
        if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
            return Err(SimilarityError::ScoreOutOfRange(value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which score a metric computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    BertscoreF1,
    MeanCos,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::BertscoreF1 => write!(f, "bertscore-f1"),
            MetricKind::MeanCos => write!(f, "mean-cos"),
        }
    }
}

/// A metric kind bound to the embedding provider that realizes it.
#[derive(Clone)]
pub struct Metric {
    pub kind: MetricKind,
    pub provider: Arc<dyn EmbeddingProvider>,
}

impl Metric {
    pub fn new(kind: MetricKind, provider: Arc<dyn EmbeddingProvider>) -> Self {
        Self { kind, provider }
    }

    /// Scores `candidate` against `reference`.
    pub fn score(
        &self,
        candidate: &str,
        reference: &str,
    ) -> Result<SimilarityScore, SimilarityError> {
        match self.kind {
            MetricKind::MeanCos => mean_cos(candidate, reference, self.provider.as_ref()),
            MetricKind::BertscoreF1 => bertscore_f1(candidate, reference, self.provider.as_ref()),
        }
    }
}

/// Standard cosine similarity, clamped into `[-1, 1]` against rounding spill.
///
/// Bitwise-identical inputs score exactly 1.
pub fn cosine(
    u: &EmbeddingVector,
    v: &EmbeddingVector,
) -> Result<SimilarityScore, SimilarityError> {
    if u.dimension() != v.dimension() {
        return Err(SimilarityError::DimensionMismatch(
            u.dimension(),
            v.dimension(),
        ));
    }
    if u.values() == v.values() {
        if u.norm() == 0.0 {
            return Err(SimilarityError::ZeroNormVector);
        }
        return Ok(SimilarityScore(1.0));
    }
    let dot: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroNormVector);
    }
    Ok(SimilarityScore((dot / (nu * nv)).clamp(-1.0, 1.0)))
}

/// Cosine of the two sentences' mean token embeddings.
pub fn mean_cos(
    candidate: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityScore, SimilarityError> {
    let cand = provider.embed_tokens(candidate)?.mean();
    let reference = provider.embed_tokens(reference)?.mean();
    cosine(&cand, &reference)
}

/// Greedy token-matching F1.
///
/// Precision is the mean over candidate tokens of the best cosine against
/// any reference token; recall swaps the roles; `F1 = 2PR / (P + R)`, with 0
/// returned when `P + R = 0`. Matching is independent per token (no optimal
/// assignment), and zero-norm token vectors are rejected.
pub fn bertscore_f1(
    candidate: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityScore, SimilarityError> {
    let cand = provider.embed_tokens(candidate)?;
    let reference = provider.embed_tokens(reference)?;

    let best_against = |from: &crate::embeddings::TokenEmbeddingSet,
                        against: &crate::embeddings::TokenEmbeddingSet|
     -> Result<f64, SimilarityError> {
        let mut total = 0.0;
        for (_, u) in from.tokens() {
            let mut best = f64::NEG_INFINITY;
            for (_, v) in against.tokens() {
                best = best.max(cosine(u, v)?.value());
            }
            total += best;
        }
        Ok(total / from.len() as f64)
    };

    let precision = best_against(&cand, &reference)?;
    let recall = best_against(&reference, &cand)?;
    let denom = precision + recall;
    let f1 = if denom == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / denom
    };
    SimilarityScore::new(f1.clamp(-1.0, 1.0))
}

/// How a similarity score becomes a positive likelihood value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LikelihoodMap {
    /// `exp(score / temperature)`; sharp separation for small temperature.
    ExpTemperature { temperature: f64 },
    /// `max(score, 0) + 1e-6`; keeps likelihoods strictly positive.
    AffineClamp,
}

impl LikelihoodMap {
    pub const AFFINE_FLOOR: f64 = 1e-6;

    /// Similarity differences between behavior descriptions are small, so
    /// the default temperature is sharp.
    pub fn default_exp() -> Self {
        LikelihoodMap::ExpTemperature { temperature: 0.1 }
    }

    pub fn exp_temperature(temperature: f64) -> Result<Self, SimilarityError> {
        if temperature <= 0.0 || temperature.is_nan() {
            return Err(SimilarityError::InvalidTemperature(temperature));
        }
        Ok(LikelihoodMap::ExpTemperature { temperature })
    }

    /// Strictly monotone map from score to a positive likelihood.
    pub fn apply(&self, score: SimilarityScore) -> f64 {
        match self {
            LikelihoodMap::ExpTemperature { temperature } => (score.value() / temperature).exp(),
            LikelihoodMap::AffineClamp => {
                // A bare clamp would be flat below zero; the exponential
                // branch keeps the map strictly monotone while matching
                // `score + floor` exactly for non-negative scores.
                let s = score.value();
                if s >= 0.0 {
                    s + Self::AFFINE_FLOOR
                } else {
                    Self::AFFINE_FLOOR * s.exp()
                }
            }
        }
    }
}
