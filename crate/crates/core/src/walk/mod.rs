//! Variable-speed random walk with generator `ℒf(x) = Σ_y μ_xy (f(y) − f(x))`.
//!
//! The walk waits an exponential time of rate `μ_x = Σ_y μ_xy` at `x` and then jumps to
//! the neighbour `y` with probability `μ_xy / μ_x`. Each path draws from its own
//! counter-based stream, so a path is a pure function of `(field, start, horizon, seed,
//! index)`.

pub mod functional;
pub mod path;

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::environment::{Environment, EnvironmentError};
use crate::lattice::{Edge, Point};
use crate::rng::{stream, Domain};

pub use functional::{
    crossing_event, evaluate_functional, reversed_functional, reversed_schedule, smoothstep, Bump, FunctionalSpec,
};
pub use path::{diffusive_rescale, raw_horizon, rescale, rescale_with_clock, Position, ScaledPath, TrajectorySample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("event cap of {cap} reached at time {time}")]
    EventCapExceeded {
        cap: u64,
        time: f64,
        partial: Box<TrajectorySample>,
    },
    #[error("total jump rate at {site:?} is {rate}")]
    ZeroRate { site: Point, rate: f64 },
    #[error("path horizon {have} is shorter than the required {need}")]
    HorizonTooShort { have: f64, need: f64 },
    #[error("invalid functional: {0}")]
    InvalidFunctional(String),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
}

/// Source of edge conductances for the walk.
pub trait Conductances: Sync {
    fn conductance(&self, edge: Edge) -> Result<f64, WalkError>;
}

/// `μ ≡ value` on every edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uniform(pub f64);

impl Conductances for Uniform {
    fn conductance(&self, _: Edge) -> Result<f64, WalkError> {
        Ok(self.0)
    }
}

/// The field `μⁿ` of an environment at a fixed level.
#[derive(Clone, Copy, Debug)]
pub struct LevelField<'a> {
    pub env: &'a Environment,
    pub level: u32,
}

impl<'a> LevelField<'a> {
    pub fn top(env: &'a Environment) -> Self {
        Self {
            env,
            level: env.levels(),
        }
    }
}

impl Conductances for LevelField<'_> {
    fn conductance(&self, edge: Edge) -> Result<f64, WalkError> {
        Ok(self.env.conductance(edge, self.level)?)
    }
}

/// Conductances given by a closure.
pub struct FnField<F>(pub F);

impl<F: Fn(Edge) -> f64 + Sync> Conductances for FnField<F> {
    fn conductance(&self, edge: Edge) -> Result<f64, WalkError> {
        Ok((self.0)(edge))
    }
}

/// Identifies one path: the stream `(seed, Paths, index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathKey {
    pub seed: u64,
    pub index: u64,
}

impl PathKey {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }
}

pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

/// Conductances of the four edges at `x`, in the order of [`Point::neighbours`].
pub fn local_rates<C: Conductances + ?Sized>(field: &C, x: Point) -> Result<[f64; 4], WalkError> {
    let n = x.neighbours();
    let mut out = [0.0; 4];
    for (slot, y) in out.iter_mut().zip(n) {
        *slot = field.conductance(Edge::between(x, y).expect("neighbours share an edge"))?;
    }
    Ok(out)
}

/// Choose a neighbour index with probability proportional to `rates`, given `u` uniform
/// on `[0, total)`.
fn pick(rates: &[f64; 4], mut u: f64) -> usize {
    for (i, r) in rates.iter().enumerate() {
        if u < *r {
            return i;
        }
        u -= r;
    }
    rates.iter().rposition(|r| *r > 0.0).unwrap_or(3)
}

/// Simulate the walk on `[0, horizon]` from `start`.
pub fn simulate_path<C: Conductances + ?Sized>(
    field: &C,
    start: Point,
    horizon: f64,
    key: PathKey,
    event_cap: u64,
) -> Result<TrajectorySample, WalkError> {
    let mut rng = stream(key.seed, Domain::Paths, key.index);
    let mut events = vec![(0.0, start)];
    let mut x = start;
    let mut t = 0.0;
    let mut rates = local_rates(field, x)?;
    loop {
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) {
            return Err(WalkError::ZeroRate { site: x, rate: total });
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += hold;
        if t > horizon {
            break;
        }
        if events.len() as u64 > event_cap {
            return Err(WalkError::EventCapExceeded {
                cap: event_cap,
                time: t,
                partial: Box::new(TrajectorySample {
                    events,
                    horizon,
                    truncated: true,
                }),
            });
        }
        let k = pick(&rates, rng.gen::<f64>() * total);
        x = x.neighbours()[k];
        events.push((t, x));
        rates = local_rates(field, x)?;
    }
    Ok(TrajectorySample {
        events,
        horizon,
        truncated: false,
    })
}

/// Simulate and return a partial path flagged as truncated instead of an error when the
/// event cap is hit.
pub fn simulate_or_truncate<C: Conductances + ?Sized>(
    field: &C,
    start: Point,
    horizon: f64,
    key: PathKey,
    event_cap: u64,
) -> Result<TrajectorySample, WalkError> {
    match simulate_path(field, start, horizon, key, event_cap) {
        Err(WalkError::EventCapExceeded { partial, .. }) => Ok(*partial),
        other => other,
    }
}
