//! Supply-risk-aware alloy design with multi-objective batch Bayesian
//! optimization.

pub mod campaign;
pub mod composition;
pub(crate) mod csvio;
pub mod error;
pub mod exec;
pub mod extraction;
pub mod gp;
pub mod optimizer;
pub mod pareto;
pub mod properties;
pub mod rng;
pub mod sampling;
pub mod supply_risk;

pub use error::{Error, Result};
