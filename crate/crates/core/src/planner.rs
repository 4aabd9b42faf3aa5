//! Intention-grounded planning: turns the predicted next intention into
//! object-delivery recommendations and tracks what has been passed already.
//!
//! Only the single argmax intention is served, never a probability-weighted
//! set, and delivered objects are never recommended again; together these
//! keep the work surface uncluttered.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::GraspPose;
use crate::taskgraph::TaskGraph;

#[derive(Debug, Error)]
pub enum PlannerError {
    /// The committed action is not in the pending queue.
    #[error("unknown action: {0:?} is not pending")]
    UnknownAction(String),
}

/// What has been passed to the human and what is queued to go.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeliveryState {
    delivered: BTreeSet<String>,
    pending: Vec<String>,
}

impl DeliveryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delivered(&self) -> &BTreeSet<String> {
        &self.delivered
    }

    pub fn pending(&self) -> &[String] {
        &self.pending
    }
}

/// One pass-the-object action for the predicted intention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAction {
    pub object: String,
    pub for_intention: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grasp: Option<GraspPose>,
}

/// Recommends deliveries for predicted intentions.
#[derive(Debug, Clone)]
pub struct Planner {
    /// Predictions below this probability produce no recommendation, so an
    /// undecided posterior early in a session cannot cause thrashing.
    pub confidence_threshold: f64,
}

impl Default for Planner {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.3,
        }
    }
}

impl Planner {
    pub fn new(confidence_threshold: f64) -> Self {
        Self {
            confidence_threshold,
        }
    }

    /// Objects the predicted intention still needs, in the intention's own
    /// object order, skipping anything already delivered. The actions are
    /// enqueued as pending until committed.
    pub fn recommend(
        &self,
        predicted: usize,
        confidence: f64,
        graph: &TaskGraph,
        state: &mut DeliveryState,
    ) -> Vec<PassAction> {
        if confidence < self.confidence_threshold {
            return Vec::new();
        }
        let Some(intention) = graph.intention(predicted) else {
            return Vec::new();
        };
        let mut actions = Vec::new();
        for object in &intention.required_objects {
            if state.delivered.contains(object) {
                continue;
            }
            if !state.pending.contains(object) {
                state.pending.push(object.clone());
            }
            actions.push(PassAction {
                object: object.clone(),
                for_intention: predicted,
                grasp: None,
            });
        }
        actions
    }
}

/// Marks a pending action as performed, moving its object to `delivered`.
pub fn commit(action: &PassAction, state: &mut DeliveryState) -> Result<(), PlannerError> {
    let Some(pos) = state.pending.iter().position(|o| o == &action.object) else {
        return Err(PlannerError::UnknownAction(action.object.clone()));
    };
    state.pending.remove(pos);
    state.delivered.insert(action.object.clone());
    Ok(())
}
