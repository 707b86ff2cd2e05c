//! Desk-scale contextual-bandit workbench for studying how the policy entropy
//! of policy-optimization agents (PG, A2C, PPO) and Q-learning agents (QL, DQN)
//! evolves during training, with executable verification of the analytic
//! update rules the agents follow.
//!
//! The crate is organized around six pieces:
//!
//! - [`numerics`] — a minimal dense-network engine: forward pass, per-output
//!   Jacobians, softmax, plain SGD, and finite-difference oracles.
//! - [`envs`] — four contextual-bandit environments (image classification,
//!   genre recommendation, synthetic clicks, behavioral preference) behind a
//!   common trait, plus IDX and feature-CSV ingestion.
//! - [`agents`] — five agents built directly on their loss gradients:
//!   linear PG and QL, and A2C, DQN, PPO over small MLPs.
//! - [`metrics`] — evaluation-set policy value, two entropy flavors, and
//!   stochastic action-selection histograms.
//! - [`theory`] — executable predictors for the first-order network-output
//!   update rules, checked against real training steps.
//! - [`runner`] / [`report`] — the experiment driver (CSV metrics) and the
//!   SVG report generator, exposed through the `entropy-lab` binary.

pub mod agents;
pub mod config;
pub mod envs;
pub mod metrics;
pub mod numerics;
pub mod report;
pub mod rng;
pub mod runner;
pub mod svg;
pub mod theory;
