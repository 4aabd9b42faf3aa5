//! The intention filter: prediction and update steps over the task graph.
//!
//! Each consumed measurement triggers one prediction step (belief times
//! transition matrix) and one update step (entrywise likelihood weighting
//! followed by normalization). Transitions come either from the fixed
//! graph-derived matrix or from per-row Monte Carlo estimation conditioned
//! on a sliding window of recent measurements; likelihoods come from
//! point-estimate generation scored against the incoming measurement.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpgm::{ConditionalQuery, Estimator, LpgmError, NodeBinding};
use crate::similarity::{LikelihoodMap, Metric, SimilarityError};
use crate::taskgraph::{fixed_transition_matrix, GraphError, TaskGraph, TransitionMatrix};

/// Node names used in oracle queries.
const CURRENT_INTENTION: &str = "the human's current intention";
const NEXT_INTENTION: &str = "the human's next intention";
const NEXT_BEHAVIOR: &str = "the human's behavior in the next frame";
const RECENT_BEHAVIOR: &str = "the human's recent behavior";

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("measurement text must be non-empty")]
    EmptyMeasurement,
    #[error("timestamps must be non-decreasing: {prev} then {got}")]
    NonMonotonicTimestamp { prev: f64, got: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid likelihood vector: {0}")]
    BadLikelihood(String),
    #[error("malformed measurement at line {line}: {detail}")]
    MalformedMeasurement { line: usize, detail: String },
    #[error(transparent)]
    Lpgm(#[from] LpgmError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A timestamped natural-language description of observed behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub text: String,
    /// Optional ground-truth intention id, used by evaluation runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl Measurement {
    pub fn new(timestamp: f64, text: impl Into<String>) -> Self {
        Self {
            timestamp,
            text: text.into(),
            label: None,
        }
    }
}

/// Parses a measurement stream: one `{"t": seconds, "text": "..."}` JSON
/// object per line, timestamps non-decreasing.
pub fn parse_measurements_jsonl(contents: &str) -> Result<Vec<Measurement>, TrackError> {
    let mut out = Vec::new();
    let mut prev: Option<f64> = None;
    for (idx, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: Measurement =
            serde_json::from_str(line).map_err(|e| TrackError::MalformedMeasurement {
                line: idx + 1,
                detail: e.to_string(),
            })?;
        if m.text.trim().is_empty() {
            return Err(TrackError::MalformedMeasurement {
                line: idx + 1,
                detail: "text must be non-empty".into(),
            });
        }
        if let Some(p) = prev {
            if m.timestamp < p {
                return Err(TrackError::NonMonotonicTimestamp {
                    prev: p,
                    got: m.timestamp,
                });
            }
        }
        prev = Some(m.timestamp);
        out.push(m);
    }
    Ok(out)
}

/// A normalized probability vector over intentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    probs: Vec<f64>,
    step_index: usize,
}

impl Belief {
    const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self, TrackError> {
        Self::with_step(probs, 0)
    }

    fn with_step(probs: Vec<f64>, step_index: usize) -> Result<Self, TrackError> {
        if probs.is_empty() {
            return Err(TrackError::InvalidBelief("empty vector".into()));
        }
        if let Some(&bad) = probs.iter().find(|&&p| p < 0.0 || !p.is_finite()) {
            return Err(TrackError::InvalidBelief(format!("invalid entry {bad}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(TrackError::InvalidBelief(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs, step_index })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Highest-probability id; ties break to the lowest id.
    pub fn argmax(&self) -> (usize, f64) {
        argmax(&self.probs)
    }
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

/// Uniform prior over the start steps of the task graph.
pub fn init_belief(graph: &TaskGraph) -> Belief {
    let mut probs = vec![0.0; graph.len()];
    let share = 1.0 / graph.start_ids().len() as f64;
    for &s in graph.start_ids() {
        probs[s] = share;
    }
    Belief::new(probs).expect("start set is non-empty and valid")
}

/// Prediction step: `predicted_j = sum_i belief_i * T[i][j]`.
pub fn predict(belief: &Belief, transition: &TransitionMatrix) -> Result<Belief, TrackError> {
    let n = belief.len();
    if transition.len() != n {
        return Err(TrackError::DimensionMismatch {
            expected: n,
            got: transition.len(),
        });
    }
    let mut out = vec![0.0; n];
    for (i, &b) in belief.probs().iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (j, &t) in transition.row(i).iter().enumerate() {
            out[j] += b * t;
        }
    }
    Belief::with_step(out, belief.step_index)
}

/// Update step on explicit likelihoods: `posterior_j` proportional to
/// `likelihood_j * predicted_j`. When every product is zero the predicted
/// belief is kept and the degenerate flag is set.
pub fn apply_likelihood(
    predicted: &Belief,
    likelihood: &[f64],
) -> Result<(Belief, bool), TrackError> {
    if likelihood.len() != predicted.len() {
        return Err(TrackError::DimensionMismatch {
            expected: predicted.len(),
            got: likelihood.len(),
        });
    }
    if let Some(&bad) = likelihood.iter().find(|&&l| l < 0.0 || !l.is_finite()) {
        return Err(TrackError::BadLikelihood(format!("invalid entry {bad}")));
    }
    let weighted: Vec<f64> = predicted
        .probs()
        .iter()
        .zip(likelihood)
        .map(|(p, l)| p * l)
        .collect();
    let sum: f64 = weighted.iter().sum();
    if sum == 0.0 {
        return Ok((predicted.clone(), true));
    }
    let probs = weighted.into_iter().map(|w| w / sum).collect();
    Ok((Belief::with_step(probs, predicted.step_index)?, false))
}

/// One prediction step ahead of the current posterior; returns the
/// maximum-probability intention (ties to the lowest id).
pub fn predict_next_intention(
    belief: &Belief,
    transition: &TransitionMatrix,
) -> Result<(usize, f64), TrackError> {
    let predicted = predict(belief, transition)?;
    Ok(predicted.argmax())
}

/// Where transition probabilities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionMode {
    /// Per-row Monte Carlo estimation conditioned on the window.
    LpgmMethod3,
    /// The graph-derived matrix with `p_stay` on the diagonal.
    FixedMatrix,
}

/// Filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Number of past measurements conditioned on (the window excludes the
    /// measurement currently being scored).
    pub window: usize,
    pub transition_mode: TransitionMode,
    /// Sample count for Monte Carlo transition rows.
    pub sample_count: usize,
    /// Diagonal weight of the fixed transition matrix. Behavior
    /// descriptions arrive faster than intentions change, so the diagonal
    /// dominates by default.
    pub p_stay: f64,
    /// Transition rows are estimated only for intentions above this belief
    /// mass; the rest copy the fixed matrix, bounding oracle calls per step
    /// to the active frontier.
    pub mass_floor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window: 3,
            transition_mode: TransitionMode::LpgmMethod3,
            sample_count: 10,
            p_stay: 0.8,
            mass_floor: 0.01,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if self.window == 0 {
            return Err(TrackError::InvalidBelief("window must be >= 1".into()));
        }
        if self.sample_count == 0 {
            return Err(TrackError::InvalidBelief(
                "sample count must be >= 1".into(),
            ));
        }
        if !(self.p_stay > 0.0 && self.p_stay <= 1.0) {
            return Err(TrackError::InvalidBelief(
                "p_stay must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Produces the transition matrix for the step about to run.
pub trait TransitionModel: Send + Sync {
    fn transition(
        &self,
        belief: &Belief,
        window: &[Measurement],
        graph: &TaskGraph,
        cfg: &TrackerConfig,
    ) -> Result<TransitionMatrix, TrackError>;
}

/// Produces the per-intention likelihood vector for a measurement.
pub trait LikelihoodModel: Send + Sync {
    fn likelihoods(
        &self,
        measurement: &Measurement,
        window: &[Measurement],
        graph: &TaskGraph,
        cfg: &TrackerConfig,
    ) -> Result<Vec<f64>, TrackError>;
}

/// Always the graph-derived fixed matrix.
pub struct FixedTransitions {
    matrix: TransitionMatrix,
}

impl FixedTransitions {
    pub fn new(graph: &TaskGraph, p_stay: f64) -> Self {
        Self {
            matrix: fixed_transition_matrix(graph, p_stay),
        }
    }
}

impl TransitionModel for FixedTransitions {
    fn transition(
        &self,
        _belief: &Belief,
        _window: &[Measurement],
        _graph: &TaskGraph,
        _cfg: &TrackerConfig,
    ) -> Result<TransitionMatrix, TrackError> {
        Ok(self.matrix.clone())
    }
}

fn window_condition(window: &[Measurement]) -> Option<NodeBinding> {
    if window.is_empty() {
        return None;
    }
    let text = window
        .iter()
        .map(|m| m.text.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    Some(NodeBinding::new(RECENT_BEHAVIOR, text))
}

/// Monte Carlo transition rows for every intention above the mass floor;
/// rows at or below it copy the fixed matrix to save oracle calls.
pub struct LpgmTransitions {
    estimator: Arc<Estimator>,
    metric: Metric,
    fallback: TransitionMatrix,
}

impl LpgmTransitions {
    pub fn new(estimator: Arc<Estimator>, metric: Metric, graph: &TaskGraph, p_stay: f64) -> Self {
        Self {
            estimator,
            metric,
            fallback: fixed_transition_matrix(graph, p_stay),
        }
    }
}

impl TransitionModel for LpgmTransitions {
    fn transition(
        &self,
        belief: &Belief,
        window: &[Measurement],
        graph: &TaskGraph,
        cfg: &TrackerConfig,
    ) -> Result<TransitionMatrix, TrackError> {
        let n = graph.len();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            if belief.probs()[i] <= cfg.mass_floor {
                rows.push(self.fallback.row(i).to_vec());
                continue;
            }
            // Support: self plus graph successors, ascending by id.
            let mut support_ids = graph.successors(i);
            support_ids.push(i);
            support_ids.sort_unstable();
            let support: Vec<String> = support_ids
                .iter()
                .map(|&j| graph.intention(j).expect("valid id").description.clone())
                .collect();

            let mut conditions = vec![NodeBinding::new(
                CURRENT_INTENTION,
                graph.intention(i).expect("valid id").description.clone(),
            )];
            conditions.extend(window_condition(window));

            let query = ConditionalQuery::monte_carlo(
                NodeBinding::new(NEXT_INTENTION, String::new()),
                conditions,
                support,
                cfg.sample_count,
            )
            .map_err(TrackError::Lpgm)?;
            let probs = self.estimator.estimate_monte_carlo(&query, &self.metric)?;

            let mut row = vec![0.0; n];
            for (k, &j) in support_ids.iter().enumerate() {
                row[j] = probs[k];
            }
            rows.push(row);
        }
        let matrix = TransitionMatrix::new(rows)?;
        debug_assert!(matrix.respects(graph));
        Ok(matrix)
    }
}

/// Likelihood by point estimate: for each intention, generate the behavior
/// description expected under it (conditioned on the window), score the
/// generation against the actual measurement, and map the score to a
/// positive likelihood.
pub struct LpgmLikelihoods {
    estimator: Arc<Estimator>,
    metric: Metric,
    map: LikelihoodMap,
}

impl LpgmLikelihoods {
    pub fn new(estimator: Arc<Estimator>, metric: Metric, map: LikelihoodMap) -> Self {
        Self {
            estimator,
            metric,
            map,
        }
    }
}

impl LikelihoodModel for LpgmLikelihoods {
    fn likelihoods(
        &self,
        measurement: &Measurement,
        window: &[Measurement],
        graph: &TaskGraph,
        _cfg: &TrackerConfig,
    ) -> Result<Vec<f64>, TrackError> {
        let mut out = Vec::with_capacity(graph.len());
        for intention in graph.intentions() {
            let mut conditions = vec![NodeBinding::new(
                NEXT_INTENTION,
                intention.description.clone(),
            )];
            conditions.extend(window_condition(window));
            let query = ConditionalQuery::point_estimate(
                NodeBinding::new(NEXT_BEHAVIOR, measurement.text.clone()),
                conditions,
            );
            let score = self.estimator.estimate_point(&query, &self.metric)?;
            out.push(self.map.apply(score));
        }
        Ok(out)
    }
}

/// Scripted per-step transition matrices, for replays and oracle tests.
/// The last matrix repeats once the queue is exhausted.
pub struct ScriptedTransitions {
    queue: Mutex<VecDeque<TransitionMatrix>>,
    last: Mutex<Option<TransitionMatrix>>,
}

impl ScriptedTransitions {
    pub fn new(matrices: Vec<TransitionMatrix>) -> Self {
        Self {
            queue: Mutex::new(matrices.into()),
            last: Mutex::new(None),
        }
    }
}

impl TransitionModel for ScriptedTransitions {
    fn transition(
        &self,
        _belief: &Belief,
        _window: &[Measurement],
        _graph: &TaskGraph,
        _cfg: &TrackerConfig,
    ) -> Result<TransitionMatrix, TrackError> {
        let mut queue = self.queue.lock().unwrap();
        match queue.pop_front() {
            Some(m) => {
                *self.last.lock().unwrap() = Some(m.clone());
                Ok(m)
            }
            None => self
                .last
                .lock()
                .unwrap()
                .clone()
                .ok_or_else(|| TrackError::InvalidBelief("no scripted transitions left".into())),
        }
    }
}

/// Scripted per-step likelihood vectors. The last vector repeats once the
/// queue is exhausted.
pub struct ScriptedLikelihoods {
    queue: Mutex<VecDeque<Vec<f64>>>,
    last: Mutex<Option<Vec<f64>>>,
}

impl ScriptedLikelihoods {
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        Self {
            queue: Mutex::new(vectors.into()),
            last: Mutex::new(None),
        }
    }
}

impl LikelihoodModel for ScriptedLikelihoods {
    fn likelihoods(
        &self,
        _measurement: &Measurement,
        _window: &[Measurement],
        _graph: &TaskGraph,
        _cfg: &TrackerConfig,
    ) -> Result<Vec<f64>, TrackError> {
        let mut queue = self.queue.lock().unwrap();
        match queue.pop_front() {
            Some(v) => {
                *self.last.lock().unwrap() = Some(v.clone());
                Ok(v)
            }
            None => self
                .last
                .lock()
                .unwrap()
                .clone()
                .ok_or_else(|| TrackError::BadLikelihood("no scripted likelihoods left".into())),
        }
    }
}

/// One filter step, as persisted in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub measurement: Measurement,
    pub prior_after_prediction: Vec<f64>,
    pub likelihood: Vec<f64>,
    pub posterior: Vec<f64>,
    pub argmax_id: usize,
    pub transition_matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// The filter session: belief, window, models, and the accumulated trace.
///
/// A tracker is a single logical session advanced sequentially; it may move
/// between threads between steps.
pub struct Tracker {
    graph: Arc<TaskGraph>,
    cfg: TrackerConfig,
    belief: Belief,
    window: VecDeque<Measurement>,
    transitions: Box<dyn TransitionModel>,
    likelihoods: Box<dyn LikelihoodModel>,
    trace: Vec<TrackRecord>,
    last_timestamp: Option<f64>,
}

impl Tracker {
    /// Wires the models chosen by `cfg.transition_mode` from one estimator,
    /// metric, and likelihood map.
    pub fn from_oracles(
        graph: Arc<TaskGraph>,
        cfg: TrackerConfig,
        estimator: Arc<Estimator>,
        metric: Metric,
        map: LikelihoodMap,
    ) -> Result<Self, TrackError> {
        cfg.validate()?;
        let transitions: Box<dyn TransitionModel> = match cfg.transition_mode {
            TransitionMode::FixedMatrix => Box::new(FixedTransitions::new(&graph, cfg.p_stay)),
            TransitionMode::LpgmMethod3 => Box::new(LpgmTransitions::new(
                estimator.clone(),
                metric.clone(),
                &graph,
                cfg.p_stay,
            )),
        };
        let likelihoods = Box::new(LpgmLikelihoods::new(estimator, metric, map));
        Ok(Self::with_models(graph, cfg, transitions, likelihoods))
    }

    /// Assembles a tracker from explicit models (scripted replays, tests).
    pub fn with_models(
        graph: Arc<TaskGraph>,
        cfg: TrackerConfig,
        transitions: Box<dyn TransitionModel>,
        likelihoods: Box<dyn LikelihoodModel>,
    ) -> Self {
        let belief = init_belief(&graph);
        Self {
            graph,
            cfg,
            belief,
            window: VecDeque::new(),
            transitions,
            likelihoods,
            trace: Vec::new(),
            last_timestamp: None,
        }
    }

    /// Replaces the initial belief (the default is uniform over starts).
    pub fn with_initial_belief(mut self, belief: Belief) -> Result<Self, TrackError> {
        if belief.len() != self.graph.len() {
            return Err(TrackError::DimensionMismatch {
                expected: self.graph.len(),
                got: belief.len(),
            });
        }
        self.belief = belief;
        self.trace.clear();
        Ok(self)
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &[TrackRecord] {
        &self.trace
    }

    /// Consumes one measurement: transition, predict, update, advance the
    /// window, append to the trace.
    pub fn step(&mut self, measurement: Measurement) -> Result<&TrackRecord, TrackError> {
        if measurement.text.trim().is_empty() {
            return Err(TrackError::EmptyMeasurement);
        }
        if let Some(prev) = self.last_timestamp {
            if measurement.timestamp < prev {
                return Err(TrackError::NonMonotonicTimestamp {
                    prev,
                    got: measurement.timestamp,
                });
            }
        }

        let window: Vec<Measurement> = self.window.iter().cloned().collect();
        let matrix = self
            .transitions
            .transition(&self.belief, &window, &self.graph, &self.cfg)?;
        let predicted = predict(&self.belief, &matrix)?;
        let likelihood =
            self.likelihoods
                .likelihoods(&measurement, &window, &self.graph, &self.cfg)?;
        let (posterior, degenerate) = apply_likelihood(&predicted, &likelihood)?;

        let mut warnings = Vec::new();
        if degenerate {
            log::warn!("DegenerateUpdate: all weighted likelihoods were zero; keeping prediction");
            warnings.push("DegenerateUpdate".to_string());
        }

        let (argmax_id, _) = posterior.argmax();
        let record = TrackRecord {
            measurement: measurement.clone(),
            prior_after_prediction: predicted.probs().to_vec(),
            likelihood,
            posterior: posterior.probs().to_vec(),
            argmax_id,
            transition_matrix: matrix.rows().to_vec(),
            warnings,
        };

        self.belief = Belief::with_step(posterior.probs().to_vec(), self.belief.step_index() + 1)?;
        self.last_timestamp = Some(measurement.timestamp);
        self.window.push_back(measurement);
        while self.window.len() > self.cfg.window {
            self.window.pop_front();
        }
        self.trace.push(record);
        Ok(self.trace.last().expect("just pushed"))
    }

    /// One-step-ahead prediction from the current posterior, using the
    /// transition matrix of the most recent step.
    pub fn predict_next(&self) -> Result<Option<(usize, f64)>, TrackError> {
        let Some(last) = self.trace.last() else {
            return Ok(None);
        };
        let matrix = TransitionMatrix::new(last.transition_matrix.clone())?;
        Ok(Some(predict_next_intention(&self.belief, &matrix)?))
    }
}
