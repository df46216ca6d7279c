//! Fixed-confidence identification of the Pareto-optimal arm set in
//! multi-objective Gaussian bandits whose objectives are ordered by a
//! polyhedral preference cone.
//!
//! The crate is layered bottom up: [`cone`] and [`pareto`] hold the order
//! geometry, [`model`] the bandit and its estimator, [`objective`] the
//! lower-bound objective and stopping thresholds, [`fw`] the Frank-Wolfe
//! allocation optimizer, [`frappe`] the sequential sampling loop and
//! [`harness`] the experiment runner.

pub mod cone;
pub mod error;
pub mod frappe;
pub mod fw;
pub mod harness;
pub mod model;
pub mod objective;
pub mod pareto;

pub use cone::{ConeSpec, Dominance, PreferenceCone, PreferenceVector};
pub use error::{Error, Result};
pub use frappe::{RunConfig, RunResult, Runner, Sampler};
pub use model::{BanditInstance, EstimatorState};
pub use objective::{Allocation, ThresholdMode, ZMode};
pub use pareto::{candidate_pairs, pareto_set, CandidatePairs, PairMode, ParetoSet};
