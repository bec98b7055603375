//! Seeding, batch acquisition and the optimization loop.

pub mod acquisition;
pub mod kmedoids;
pub mod mobbo;

pub use crate::sampling::lhs;
pub use acquisition::{check_convergence, predict, select_batch, AcquisitionSettings, BatchStrategy, Pick, Prediction, Selection};
pub use kmedoids::{k_medoids, medoid_cost, seed_batch, seed_from};
pub use mobbo::{run_loop, Evaluation, Event, IterationSummary, LoopOutcome, LoopSettings, Observation, Problem, Resume};
