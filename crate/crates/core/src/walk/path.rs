//! Right-continuous piecewise-constant trajectories and their diffusive rescaling.

use serde::{Deserialize, Serialize};

use super::WalkError;
use crate::lattice::Point;

/// Anything that can be read as a point of the plane.
pub trait Position: Copy {
    fn coords(&self) -> [f64; 2];
}

impl Position for Point {
    fn coords(&self) -> [f64; 2] {
        [self.x as f64, self.y as f64]
    }
}

impl Position for [f64; 2] {
    fn coords(&self) -> [f64; 2] {
        *self
    }
}

/// Jump times and positions of a càdlàg step path on `[0, horizon]`.
///
/// The first event is at time 0. The value at time `t` is the position of the last
/// event at or before `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample<P = Point> {
    pub events: Vec<(f64, P)>,
    pub horizon: f64,
    /// The simulation hit its event cap before reaching `horizon`.
    #[serde(default)]
    pub truncated: bool,
}

/// Path with real-valued positions, as produced by [`rescale`].
pub type ScaledPath = TrajectorySample<[f64; 2]>;

/// Time change applied on top of `ε`-scaling so that the uniform walk has unit
/// variance per coordinate per unit time.
pub const DIFFUSIVE_CLOCK: f64 = 2.0;

impl<P: Position> TrajectorySample<P> {
    pub fn constant(position: P, horizon: f64) -> Self {
        Self {
            events: vec![(0.0, position)],
            horizon,
            truncated: false,
        }
    }

    pub fn start(&self) -> P {
        self.events[0].1
    }

    pub fn jumps(&self) -> usize {
        self.events.len() - 1
    }

    /// Position at time `t` (right-continuous).
    pub fn at(&self, t: f64) -> P {
        let i = self.events.partition_point(|(s, _)| *s <= t);
        self.events[i.max(1) - 1].1
    }

    /// Events with time in `[0, t]`.
    pub fn until(&self, t: f64) -> &[(f64, P)] {
        &self.events[..self.events.partition_point(|(s, _)| *s <= t)]
    }

    /// Uniform distance `sup_t |w(t) − w′(t)|` over the common horizon.
    pub fn uniform_distance<Q: Position>(&self, other: &TrajectorySample<Q>) -> f64 {
        let horizon = self.horizon.min(other.horizon);
        let mut times: Vec<f64> = self
            .until(horizon)
            .iter()
            .map(|e| e.0)
            .chain(other.until(horizon).iter().map(|e| e.0))
            .collect();
        times.sort_by(f64::total_cmp);
        times
            .into_iter()
            .map(|t| {
                let (p, q) = (self.at(t).coords(), other.at(t).coords());
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .fold(0.0, f64::max)
    }
}

impl TrajectorySample<Point> {
    /// Same path seen from its starting point.
    pub fn centred(&self) -> Self {
        let origin = self.start();
        Self {
            events: self.events.iter().map(|&(t, p)| (t, p - origin)).collect(),
            horizon: self.horizon,
            truncated: self.truncated,
        }
    }
}

/// `t ↦ ε w(t/(clock·ε²))` restricted to `[0, horizon]`.
pub fn rescale_with_clock<P: Position>(
    path: &TrajectorySample<P>,
    eps: f64,
    clock: f64,
    horizon: f64,
) -> Result<ScaledPath, WalkError> {
    let time = clock * eps * eps;
    let required = horizon / time;
    if path.horizon < required * (1.0 - 1e-12) {
        return Err(WalkError::HorizonTooShort {
            have: path.horizon,
            need: required,
        });
    }
    let events = path
        .until(required)
        .iter()
        .map(|(t, p)| {
            let [x, y] = p.coords();
            (t * time, [eps * x, eps * y])
        })
        .collect();
    Ok(TrajectorySample {
        events,
        horizon,
        truncated: path.truncated,
    })
}

/// Plain scaling `X^{(ε)}_t = ε X_{t/ε²}` on `[0, horizon]`.
pub fn rescale<P: Position>(path: &TrajectorySample<P>, eps: f64, horizon: f64) -> Result<ScaledPath, WalkError> {
    rescale_with_clock(path, eps, 1.0, horizon)
}

/// `X^{(ε)}_t = ε X_{t/(2ε²)}`: the scaling under which the walk in a unit-conductance
/// environment converges to standard Brownian motion.
pub fn diffusive_rescale<P: Position>(
    path: &TrajectorySample<P>,
    eps: f64,
    horizon: f64,
) -> Result<ScaledPath, WalkError> {
    rescale_with_clock(path, eps, DIFFUSIVE_CLOCK, horizon)
}

/// Raw horizon needed for a diffusively rescaled path on `[0, horizon]`.
pub fn raw_horizon(eps: f64, horizon: f64) -> f64 {
    horizon / (DIFFUSIVE_CLOCK * eps * eps)
}
