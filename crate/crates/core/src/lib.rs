//! Hierarchical random conductance environments on Z², effective conductance tuning,
//! variable-speed random walks and invariance-principle diagnostics.
//!
//! Numerical types of the resistance layer are generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix them to `f64`, which is what the walk and the diagnostics use.

pub mod diagnostics;
pub mod environment;
pub mod lattice;
pub mod resistance;
pub mod rng;
pub mod scalar;
pub mod walk;

pub use diagnostics::{
    annealed_estimate, bm_reference, functional_discrepancy, hitting_probability, obstacle_blocking_experiment,
    quenched_spread, reversal_identity_check, DiagnosticsError, EstimatorReport, FiniteChain, FunctionalLibrary,
};
pub use environment::{
    obstacle_atlas, sample_offsets, special_edge_census, validate_scales, Census, EdgeClass, Environment,
    EnvironmentError, EnvironmentSpec, ObstacleAtlas, Profile, ScaleParams, ValidationReport,
};
pub use lattice::{Direction, Edge, Point};
pub use resistance::{
    duality_certificate, effective_conductance, tune_k, DualityReport, KCache, ResistanceError, SolverOptions,
    TuneOptions, TuneResult,
};
pub use scalar::Scalar;
pub use walk::{
    crossing_event, diffusive_rescale, evaluate_functional, rescale, reversed_functional, simulate_path, Bump,
    FunctionalSpec, TrajectorySample, WalkError,
};

pub type Potential = resistance::PotentialField<f64>;
pub type Flow = resistance::FlowField<f64>;
pub type Weights = resistance::NetworkWeights<f64>;
pub type PotentialSolution = resistance::Solution<f64>;
