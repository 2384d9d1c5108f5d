//! Incentive-driven load balancing for emergency demand response.
//!
//! The crate simulates an opt-in program in which households accept an
//! upfront incentive in exchange for elevated rates on a few short-notice
//! emergency days, and implements the participant-selection framework built
//! on two graph neural networks:
//!
//! * [`community`]: households, neighborhoods, synthetic generation, CSV ingestion.
//! * [`tariff`]: emergency rates, minimum incentives, the acceptance oracle, rate hikes.
//! * [`metrics`]: acceptance rate, responsiveness cost, demand reduction, budget allocation.
//! * [`patternnet`]: GRU + attention forecaster whose inter-household attention
//!   matrix measures household similarity.
//! * [`selector`]: spectral clustering, stratified queries and semi-supervised
//!   GCN classification over that similarity graph.
//! * [`harness`]: scenario runs, experiment sweeps and their CSV/JSON outputs.

pub mod community;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod patternnet;
pub mod rng;
pub mod selector;
pub mod tariff;

pub use error::{IlbError, Result};
