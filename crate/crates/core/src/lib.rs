//! Language-driven intention tracking.
//!
//! A Bayesian filter over language-valued intention states. The hidden state
//! is the task step a human is working on; measurements are natural-language
//! descriptions of observed behavior. Transition and likelihood terms are
//! estimated by querying language-model oracles, so the same machinery
//! generalizes to any task that can be described as a graph of steps.
//!
//! Module map:
//! - [`embeddings`]: token/sentence vectors behind a uniform provider trait
//! - [`similarity`]: mean-cos and greedy-matching F1 scores, score-to-likelihood maps
//! - [`providers`]: chat/embedding backends, scripted mocks, caching, transcripts
//! - [`lpgm`]: conditional-probability estimation over a text-generation oracle
//! - [`taskgraph`]: step generation, reversibility edges, fixed transition matrices
//! - [`tracker`]: the prediction/update filter and one-step-ahead prediction
//! - [`planner`]: intention-grounded object delivery recommendations
//! - [`scene`]: PCA orientation and top-down grasp poses from 2-D point sets

pub mod embeddings;
pub mod lpgm;
pub mod planner;
pub mod providers;
pub mod scene;
pub mod similarity;
pub mod taskgraph;
pub mod tracker;
