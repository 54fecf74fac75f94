//! Dense edge weights on a square `[0, a]²`.

use crate::environment::Environment;
use crate::lattice::{Direction, Edge, Point};
use crate::scalar::Scalar;

use super::ResistanceError;

/// Largest square side that may be materialised densely.
pub const MAX_DENSE_SIDE: u64 = 4096;

/// Raw conductances of every edge inside `[0, a]²`, plus the border convention used when
/// the weights are read back through [`NetworkWeights::weight`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights<T> {
    side: usize,
    horizontal: Vec<T>,
    vertical: Vec<T>,
    border_rule: bool,
}

impl<T: Scalar> NetworkWeights<T> {
    pub fn uniform(side: usize, value: T, border_rule: bool) -> Self {
        Self {
            side,
            horizontal: vec![value; side * (side + 1)],
            vertical: vec![value; side * (side + 1)],
            border_rule,
        }
    }

    /// Materialise `μ^level` on `[0, a_level]²` for the environment as given (callers pin
    /// offsets themselves). `k` replaces the high value of the top level when present.
    pub fn from_environment(
        env: &Environment,
        level: u32,
        k: Option<f64>,
        border_rule: bool,
    ) -> Result<Self, ResistanceError> {
        let a = env.spec().scale(level)?.a;
        Self::from_environment_on(env, level, k, border_rule, a)
    }

    /// Like [`from_environment`](Self::from_environment) on a square of arbitrary side.
    pub fn from_environment_on(
        env: &Environment,
        level: u32,
        k: Option<f64>,
        border_rule: bool,
        side: u64,
    ) -> Result<Self, ResistanceError> {
        if side > MAX_DENSE_SIDE {
            return Err(ResistanceError::TooLarge { side });
        }
        let side = side as usize;
        let mut w = Self::uniform(side, T::one(), border_rule);
        for y in 0..=side as i64 {
            for x in 0..=side as i64 {
                for e in [Edge::horizontal(x, y), Edge::vertical(x, y)] {
                    if !w.contains(e) {
                        continue;
                    }
                    let value = match k {
                        Some(k) => env.conductance_with_k(e, level, k)?,
                        None => env.conductance(e, level)?,
                    };
                    w.set(e, T::of(value))?;
                }
            }
        }
        Ok(w)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn border_rule(&self) -> bool {
        self.border_rule
    }

    pub fn with_border_rule(mut self, on: bool) -> Self {
        self.border_rule = on;
        self
    }

    pub fn contains(&self, e: Edge) -> bool {
        let a = self.side as i64;
        let (p, q) = e.endpoints();
        [p, q].iter().all(|r| (0..=a).contains(&r.x) && (0..=a).contains(&r.y))
    }

    fn slot(&self, e: Edge) -> Option<(Direction, usize)> {
        if !self.contains(e) {
            return None;
        }
        let (x, y) = (e.base.x as usize, e.base.y as usize);
        Some(match e.direction {
            Direction::Horizontal => (Direction::Horizontal, y * self.side + x),
            Direction::Vertical => (Direction::Vertical, y * (self.side + 1) + x),
        })
    }

    /// Stored conductance `μ_e`.
    pub fn raw(&self, e: Edge) -> Option<T> {
        self.slot(e).map(|(d, i)| match d {
            Direction::Horizontal => self.horizontal[i],
            Direction::Vertical => self.vertical[i],
        })
    }

    pub fn set(&mut self, e: Edge, value: T) -> Result<(), ResistanceError> {
        if !(value >= T::zero()) || !value.is_finite() {
            return Err(ResistanceError::SingularWeights {
                edge: e,
                value: value.as_f64(),
            });
        }
        match self.slot(e) {
            Some((Direction::Horizontal, i)) => self.horizontal[i] = value,
            Some((Direction::Vertical, i)) => self.vertical[i] = value,
            None => return Err(ResistanceError::OutsideSquare { edge: e }),
        }
        Ok(())
    }

    /// True when both endpoints of `e` lie on the boundary of the square.
    pub fn on_border(&self, e: Edge) -> bool {
        edge_on_square_border(e, Point::ORIGIN, self.side as i64)
    }

    /// Effective weight: `μ_e`, halved on border edges when the border rule is on.
    pub fn weight(&self, e: Edge) -> Option<T> {
        self.raw(e).map(|w| {
            if self.border_rule && self.on_border(e) {
                w * T::of(0.5)
            } else {
                w
            }
        })
    }

    /// Every edge of the square.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let a = self.side as i64;
        (0..=a).flat_map(move |y| {
            (0..=a).flat_map(move |x| {
                let mut v = Vec::with_capacity(2);
                if x < a {
                    v.push(Edge::horizontal(x, y));
                }
                if y < a {
                    v.push(Edge::vertical(x, y));
                }
                v
            })
        })
    }

    /// Check the contract of the solver: no negative or non-finite weight.
    pub fn check(&self) -> Result<(), ResistanceError> {
        for e in self.edges() {
            let w = self.raw(e).expect("edge inside square");
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(ResistanceError::SingularWeights {
                    edge: e,
                    value: w.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// Both endpoints of `e` on the boundary of the square with lower-left corner `corner`.
pub fn edge_on_square_border(e: Edge, corner: Point, side: i64) -> bool {
    let on = |p: Point| {
        let (x, y) = (p.x - corner.x, p.y - corner.y);
        x == 0 || y == 0 || x == side || y == side
    };
    let (p, q) = e.endpoints();
    on(p) && on(q)
}
