//! Effective conductance of the period square, tuning of the high conductance and the
//! dual flow picture.
//!
//! `σ²` is the minimal Dirichlet energy over potentials equal to 0 on the bottom row and
//! 1 on the top row of `[0, a_n]²`, with edges along the boundary of the square carrying
//! half their conductance. The same quantity is the reciprocal of the minimal energy of a
//! unit-flux flow, which is what [`duality_certificate`] checks.

pub mod diversion;
pub mod flow;
pub mod network;
pub mod potential;
pub mod tune;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Environment, EnvironmentError};
use crate::lattice::Edge;
use crate::scalar::Scalar;

pub use diversion::{build_diverted_flow, divert_around_tile, DivertedFlow, Side, TileKit};
pub use flow::{flow_energy, flux, gradient_flow, paste_flow, rebalance, tile_energy, FlowField};
pub use network::NetworkWeights;
pub use potential::{dirichlet_energy, paste_potential, solve_potential, PotentialField, Solution, SolverOptions};
pub use tune::{tune_k, KCache, TuneOptions, TuneResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResistanceError {
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {relative_residual:e}")]
    SolverDiverged { iterations: usize, relative_residual: f64 },
    #[error("edge {edge:?} has conductance {value}; weights must be finite and non-negative")]
    SingularWeights { edge: Edge, value: f64 },
    #[error("edge {edge:?} lies outside the square")]
    OutsideSquare { edge: Edge },
    #[error("flow crosses the zero-conductance edge {edge:?}")]
    InfiniteEnergy { edge: Edge },
    #[error("sigma^2 = {sigma_sq} <= 1 at K = {k_hi} after bracket expansion")]
    BracketFailure { k_hi: f64, sigma_sq: f64 },
    #[error("sigma^2(0) = {sigma_sq} is not below 1; nothing to tune")]
    NoDropAtZero { sigma_sq: f64 },
    #[error("routing conflict: {0}")]
    RoutingConflict(String),
    #[error("square of side {side} is too large to materialise")]
    TooLarge { side: u64 },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
}

/// Weights of `μ^level` on the pinned period square with border halving, `K` replaced.
pub fn level_weights<T: Scalar>(env: &Environment, level: u32, k: f64) -> Result<NetworkWeights<T>, ResistanceError> {
    let pinned = Environment::new(env.spec().pinned())?;
    NetworkWeights::from_environment(&pinned, level, Some(k), true)
}

/// Solve the level-n period square at high conductance `k`.
pub fn solve_level<T: Scalar>(
    env: &Environment,
    level: u32,
    k: f64,
    opts: &SolverOptions,
    initial: Option<&PotentialField<T>>,
) -> Result<(NetworkWeights<T>, Solution<T>), ResistanceError> {
    let weights = level_weights(env, level, k)?;
    let solution = solve_potential(&weights, opts, initial)?;
    Ok((weights, solution))
}

/// `σ_n²(K)`.
pub fn effective_conductance<T: Scalar>(
    env: &Environment,
    level: u32,
    k: f64,
    opts: &SolverOptions,
) -> Result<T, ResistanceError> {
    Ok(solve_level::<T>(env, level, k, opts, None)?.1.energy)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub sigma_sq: f64,
    pub flux: f64,
    /// Energy of the rebalanced gradient flow at unit flux.
    pub flow_energy: f64,
    pub gap: f64,
    /// Largest node imbalance of the raw gradient flow relative to its flux.
    pub balance_error: f64,
    pub certified: bool,
}

/// Gap `|σ² · E(J) − 1|` where `σ²` is the energy of the solved potential and `J` its
/// gradient flow, made exactly divergence free and normalised to unit flux. Both factors
/// bound the true values from the correct side, so a small gap certifies the solve.
pub fn certify<T: Scalar>(
    weights: &NetworkWeights<T>,
    solution: &Solution<T>,
) -> Result<DualityReport, ResistanceError> {
    let g = gradient_flow(&solution.potential, weights);
    let balance = (g.balance_error() / g.flux()).as_f64();
    let g = flow::rebalance(&g, weights);
    let f = g.flux();
    let unit = g.scaled(T::one() / f);
    let e = flow_energy(&unit, weights)?;
    let gap = (solution.energy * e - T::one()).abs().as_f64();
    Ok(DualityReport {
        sigma_sq: solution.energy.as_f64(),
        flux: f.as_f64(),
        flow_energy: e.as_f64(),
        gap,
        balance_error: balance,
        certified: gap <= 1e-8,
    })
}

/// Solve at `k` and certify the solve by flow duality.
pub fn duality_certificate<T: Scalar>(
    env: &Environment,
    level: u32,
    k: f64,
    opts: &SolverOptions,
) -> Result<DualityReport, ResistanceError> {
    let (w, s) = solve_level::<T>(env, level, k, opts, None)?;
    certify(&w, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvironmentSpec, Profile, ScaleParams};

    fn desk(k: f64) -> Environment {
        Environment::new(EnvironmentSpec::sample(
            vec![ScaleParams::new(1, 224, 8, 96).with_k(k)],
            Profile::Desk,
            1,
        ))
        .unwrap()
    }

    #[test]
    fn uniform_square_certificate() {
        let w = NetworkWeights::<f64>::uniform(16, 1.0, true);
        let s = solve_potential(&w, &SolverOptions::default(), Some(&PotentialField::constant(16, 0.0))).unwrap();
        let r = certify(&w, &s).unwrap();
        assert!(r.gap <= 1e-10, "{r:?}");
        assert!(r.certified);
    }

    #[test]
    fn obstacle_square_certificate_and_strict_drop() {
        let env = desk(2.0);
        let r = duality_certificate::<f64>(&env, 1, 2.0, &SolverOptions::default()).unwrap();
        assert!(r.gap <= 1e-8, "{r:?}");
        assert!(r.sigma_sq < 1.0 + 0.1);
        let zero = effective_conductance::<f64>(&env, 1, 0.0, &SolverOptions::default()).unwrap();
        assert!(zero < 1.0);
    }

    #[test]
    fn unconverged_solve_is_flagged() {
        let env = desk(2.0);
        let opts = SolverOptions {
            residual_tol: 1e-1,
            max_iterations: 0,
        };
        let w = level_weights::<f64>(&env, 1, 2.0).unwrap();
        let s = solve_potential(&w, &opts, Some(&PotentialField::constant(224, 0.0))).unwrap();
        let r = certify(&w, &s).unwrap();
        assert!(r.gap > 1e-4, "{r:?}");
        assert!(!r.certified);
    }

    #[test]
    fn monotone_in_k_and_offsets_do_not_matter() {
        let env = desk(1.0);
        let opts = SolverOptions::default();
        let grid = [0.0, 0.5, 1.0, 4.0, 50.0];
        let values: Vec<f64> = grid
            .iter()
            .map(|&k| effective_conductance::<f64>(&env, 1, k, &opts).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[0] <= w[1] + 1e-12, "{values:?}");
        }
        let other = Environment::new(EnvironmentSpec::sample(env.spec().scales.clone(), Profile::Desk, 99)).unwrap();
        let v = effective_conductance::<f64>(&other, 1, 4.0, &opts).unwrap();
        assert_eq!(v, values[3]);
    }

    #[test]
    fn thomson_bound_for_diverted_flow() {
        let k = 50.0 * 8.0;
        let env = desk(k);
        let opts = SolverOptions::default();
        let sigma_sq = effective_conductance::<f64>(&env, 1, k, &opts).unwrap();
        let j = build_diverted_flow::<f64>(&Environment::new(env.spec().pinned()).unwrap(), 1, &opts).unwrap();
        let w = level_weights::<f64>(&env, 1, k).unwrap();
        let e = flow_energy(&j.flow, &w).unwrap();
        assert!(
            e >= 1.0 / sigma_sq * (1.0 - 1e-10),
            "E(J) = {e}, 1/σ² = {}",
            1.0 / sigma_sq
        );
    }
}
