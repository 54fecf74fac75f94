//! Statistical experiments contrasting averaged and quenched behaviour of the walk.

pub mod chain;
pub mod estimate;
pub mod obstacle;
pub mod reference;
pub mod stats;

use thiserror::Error;

use crate::environment::EnvironmentError;
use crate::walk::WalkError;

pub use chain::{reversal_identity_check, ChainDocument, ChainFunctional, FiniteChain, ReversalReport};
pub use estimate::{
    annealed_estimate, functional_discrepancy, path_values, quenched_spread, AnnealedOptions, DiscrepancyReport,
    Ensemble, EnvEstimate, EstimatorReport, FunctionalLibrary, NamedFunctional, QuenchedEstimate, SimulationOptions,
    SpreadReport, Statistic,
};
pub use obstacle::{
    brownian_crossing, conditional_hit_count, distance_to_obstacles, find_env_seed, hitting_centre,
    hitting_probability, in_hitting_set, obstacle_blocking_experiment, BlockingOptions, BlockingReport, HittingReport,
};
pub use reference::{bm_reference, gauss_legendre, BmReference, ReferenceMethod, ReferenceOptions};
pub use stats::{mean_stderr, separation, Interval, Proportion, Z99};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
}
