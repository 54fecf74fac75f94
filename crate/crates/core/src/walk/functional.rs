//! Cylinder functionals `F(w) = ∏ f_i(w(t_i))` built from smoothstep bumps, their
//! time-reversed companions, and the obstacle-crossing event.

use serde::{Deserialize, Serialize};

use super::path::{Position, TrajectorySample};
use super::WalkError;

/// Compactly supported C¹ profile `s(u) = 1 − u²(3 − 2|u|)` on `|u| ≤ 1`.
pub fn smoothstep(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        0.0
    } else {
        1.0 - a * a * (3.0 - 2.0 * a)
    }
}

/// Largest slope of [`smoothstep`], reached at `|u| = 1/2`.
pub const SMOOTHSTEP_SLOPE: f64 = 1.5;

mod radius_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_finite() {
            s.serialize_f64(*r)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `h · s((x − c₁)/r) · s((y − c₂)/r)`. An infinite radius (`null` in JSON) gives the
/// constant `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    #[serde(with = "radius_serde")]
    pub radius: f64,
    pub height: f64,
}

impl Bump {
    pub fn new(center: [f64; 2], radius: f64, height: f64) -> Self {
        Self { center, radius, height }
    }

    pub fn constant(height: f64) -> Self {
        Self::new([0.0, 0.0], f64::INFINITY, height)
    }

    /// One coordinate of the tensor product, without the height.
    pub fn profile(&self, axis: usize, x: f64) -> f64 {
        if self.radius.is_infinite() {
            1.0
        } else {
            smoothstep((x - self.center[axis]) / self.radius)
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.height * self.profile(0, p[0]) * self.profile(1, p[1])
    }

    /// Bound on the Euclidean norm of the gradient.
    pub fn gradient_bound(&self) -> f64 {
        if self.radius.is_infinite() {
            0.0
        } else {
            self.height.abs() * SMOOTHSTEP_SLOPE * std::f64::consts::SQRT_2 / self.radius
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub times: Vec<f64>,
    pub bumps: Vec<Bump>,
}

impl FunctionalSpec {
    pub fn new(times: Vec<f64>, bumps: Vec<Bump>) -> Result<Self, WalkError> {
        let spec = Self { times, bumps };
        spec.check()?;
        Ok(spec)
    }

    pub fn single(t: f64, bump: Bump) -> Self {
        Self {
            times: vec![t],
            bumps: vec![bump],
        }
    }

    pub fn check(&self) -> Result<(), WalkError> {
        let bad = |why: &str| Err(WalkError::InvalidFunctional(why.to_string()));
        if self.times.is_empty() {
            return bad("at least one time is required");
        }
        if self.times.len() != self.bumps.len() {
            return bad("one bump per time is required");
        }
        if self.times[0] < 0.0 || self.times.windows(2).any(|w| !(w[0] <= w[1])) {
            return bad("times must be non-negative and non-decreasing");
        }
        if self
            .bumps
            .iter()
            .any(|b| !(b.radius > 0.0) || !b.height.is_finite() || b.center.iter().any(|c| !c.is_finite()))
        {
            return bad("bumps need positive radius, finite height and finite centre");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("non-empty functional")
    }

    /// `max(height, gradient bound)` over the bumps.
    pub fn lipschitz_constant(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.height.abs().max(b.gradient_bound()))
            .fold(0.0, f64::max)
    }

    /// Product of the absolute heights.
    pub fn sup_bound(&self) -> f64 {
        self.bumps.iter().map(|b| b.height.abs()).product()
    }
}

/// Index pattern of the reversed functional: for `s_j = t_m − t_{m−j}` the factors are
/// `f_{m−j}` at `s_j` (`j = 1..m−1`) followed by `f_j` at `t_m + t_j` (`j = 1..m`).
/// Returned as `(time, index of the factor)` with zero-based indices.
pub fn reversed_schedule(times: &[f64]) -> Vec<(f64, usize)> {
    let m = times.len();
    let tm = times[m - 1];
    let mut out = Vec::with_capacity(2 * m - 1);
    for j in 1..m {
        out.push((tm - times[m - 1 - j], m - 1 - j));
    }
    for (j, t) in times.iter().enumerate() {
        out.push((tm + t, j));
    }
    out
}

/// Reversed-augmented functional on the doubled horizon.
pub fn reversed_functional(spec: &FunctionalSpec) -> FunctionalSpec {
    let (times, bumps) = reversed_schedule(&spec.times)
        .into_iter()
        .map(|(t, i)| (t, spec.bumps[i]))
        .unzip();
    FunctionalSpec { times, bumps }
}

/// `∏ f_i(w(t_i))` with the right-continuous convention.
pub fn evaluate_functional<P: Position>(spec: &FunctionalSpec, path: &TrajectorySample<P>) -> f64 {
    let mut value = 1.0;
    for (t, bump) in spec.times.iter().zip(&spec.bumps) {
        value *= bump.eval(path.at(*t).coords());
        if value == 0.0 {
            break;
        }
    }
    value
}

/// `{|Z²_s| < 3/4 and |Z¹_s| ≤ 2 for s ≤ 1, Z¹_1 > 1}` on a rescaled path.
pub fn crossing_event<P: Position>(path: &TrajectorySample<P>) -> bool {
    let inside = path.until(1.0).iter().all(|(_, p)| {
        let [x, y] = p.coords();
        y.abs() < 0.75 && x.abs() <= 2.0
    });
    inside && path.at(1.0).coords()[0] > 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Point;
    use proptest::prelude::*;

    fn path(events: Vec<(f64, [f64; 2])>, horizon: f64) -> TrajectorySample<[f64; 2]> {
        TrajectorySample {
            events,
            horizon,
            truncated: false,
        }
    }

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(0.0), 1.0);
        assert_eq!(smoothstep(1.0), 0.0);
        assert_eq!(smoothstep(-0.5), 0.5);
        let h = 1e-7;
        let slope = (smoothstep(0.5 + h) - smoothstep(0.5 - h)) / (2.0 * h);
        assert!((slope + SMOOTHSTEP_SLOPE).abs() < 1e-6);
        // C¹ at the edge of the support
        assert!((smoothstep(1.0 - h) / h).abs() < 1e-5);
    }

    #[test]
    fn bump_at_rest_and_disjoint_support() {
        let f = FunctionalSpec::single(0.5, Bump::new([0.0, 0.0], 1.0, 1.0));
        let rest = TrajectorySample::constant(Point::ORIGIN, 1.0);
        assert_eq!(evaluate_functional(&f, &rest), f.bumps[0].eval([0.0, 0.0]));
        let far = FunctionalSpec::single(0.5, Bump::new([5.0, 5.0], 1.0, 1.0));
        assert_eq!(evaluate_functional(&far, &rest), 0.0);
    }

    #[test]
    fn validation() {
        assert!(FunctionalSpec::new(vec![], vec![]).is_err());
        assert!(FunctionalSpec::new(vec![0.5, 0.25], vec![Bump::constant(1.0); 2]).is_err());
        assert!(FunctionalSpec::new(vec![0.5], vec![Bump::new([0.0, 0.0], 0.0, 1.0)]).is_err());
        assert!(FunctionalSpec::new(vec![0.25, 0.25], vec![Bump::constant(1.0); 2]).is_ok());
    }

    #[test]
    fn constant_bump_round_trips_through_json() {
        let f = FunctionalSpec::single(1.0, Bump::constant(2.0));
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("null"));
        assert_eq!(serde_json::from_str::<FunctionalSpec>(&text).unwrap(), f);
    }

    #[test]
    fn reversal_schedule() {
        let f1 = Bump::new([0.0, 0.0], 1.0, 1.0);
        let f2 = Bump::new([1.0, 0.0], 2.0, 0.5);
        let single = reversed_functional(&FunctionalSpec::single(0.3, f1));
        assert_eq!(single.times, vec![0.6]);
        assert_eq!(single.bumps, vec![f1]);

        let two = reversed_functional(&FunctionalSpec::new(vec![0.25, 0.5], vec![f1, f2]).unwrap());
        assert_eq!(two.times, vec![0.25, 0.75, 1.0]);
        assert_eq!(two.bumps, vec![f1, f1, f2]);

        // m = 3, (t₁, t₂, t₃) = (0.1, 0.3, 0.6): s₁ = 0.3, s₂ = 0.5, then 0.7, 0.9, 1.2
        let sched = reversed_schedule(&[0.1, 0.3, 0.6]);
        let expect = [(0.3, 1), (0.5, 0), (0.7, 0), (0.9, 1), (1.2, 2)];
        for ((t, i), (u, j)) in sched.iter().zip(expect) {
            assert!((t - u).abs() < 1e-15 && *i == j);
        }
    }

    #[test]
    fn crossing_event_cases() {
        assert!(!crossing_event(&path(vec![(0.0, [0.0, 0.0])], 1.0)));
        assert!(crossing_event(&path(vec![(0.0, [0.0, 0.0]), (1e-3, [1.5, 0.0])], 1.0)));
        // steps of 1/2 to the right every 0.1: reaches 2.5 at t = 0.5
        let march: Vec<_> = (0..=10).map(|k| (0.1 * k as f64, [0.5 * k as f64, 0.0])).collect();
        assert!(march.iter().any(|(t, p)| *t <= 1.0 && p[0] > 2.0));
        assert!(!crossing_event(&path(march, 1.0)));
        // band exit at the boundary value itself is an exit
        let edge = path(vec![(0.0, [0.0, 0.0]), (0.2, [0.0, 0.75]), (0.3, [1.5, 0.0])], 1.0);
        assert!(!crossing_event(&edge));
        // jumps after time 1 do not matter
        let late = path(vec![(0.0, [0.0, 0.0]), (0.5, [1.5, 0.0]), (1.5, [9.0, 9.0])], 2.0);
        assert!(crossing_event(&late));
    }

    fn arb_path() -> impl Strategy<Value = TrajectorySample<[f64; 2]>> {
        prop::collection::vec((0.001f64..0.2, -2.0f64..2.0, -2.0f64..2.0), 1..20).prop_map(|steps| {
            let mut t = 0.0;
            let mut events = vec![(0.0, [0.0, 0.0])];
            for (dt, x, y) in steps {
                t += dt;
                events.push((t, [x, y]));
            }
            TrajectorySample {
                events,
                horizon: 1.0,
                truncated: false,
            }
        })
    }

    proptest! {
        #[test]
        fn lipschitz_in_uniform_distance(
            w in arb_path(),
            shift in (-0.3f64..0.3, -0.3f64..0.3),
            r in 0.3f64..2.0,
        ) {
            let spec = FunctionalSpec::new(
                vec![0.2, 0.5, 0.9],
                vec![
                    Bump::new([0.0, 0.0], r, 1.0),
                    Bump::new([0.5, -0.5], r, 1.0),
                    Bump::new([-0.5, 0.5], 2.0 * r, 0.8),
                ],
            ).unwrap();
            let moved = TrajectorySample {
                events: w.events.iter().map(|&(t, [x, y])| (t, [x + shift.0, y + shift.1])).collect(),
                ..w.clone()
            };
            let d = w.uniform_distance(&moved);
            let c = spec.lipschitz_constant();
            let m = spec.len() as i32;
            let diff = (evaluate_functional(&spec, &w) - evaluate_functional(&spec, &moved)).abs();
            prop_assert!(diff <= m as f64 * c.powi(m) * d + 1e-12);
            prop_assert!(evaluate_functional(&spec, &w).abs() <= spec.sup_bound());
        }
    }
}
