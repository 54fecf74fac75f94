//! Potentials on `[0, a]²`, their Dirichlet energy and the harmonic solve.

use serde::{Deserialize, Serialize};

use crate::lattice::{Edge, Point};
use crate::scalar::{CompensatedSum, Scalar};

use super::network::NetworkWeights;
use super::ResistanceError;

/// Real value per lattice point of `[0, a]²`, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField<T> {
    side: usize,
    values: Vec<T>,
}

impl<T: Scalar> PotentialField<T> {
    pub fn constant(side: usize, value: T) -> Self {
        Self {
            side,
            values: vec![value; (side + 1) * (side + 1)],
        }
    }

    /// The pinned ramp `f(x, y) = y / a`.
    pub fn linear(side: usize) -> Self {
        let mut f = Self::constant(side, T::zero());
        for y in 0..=side {
            for x in 0..=side {
                f.values[y * (side + 1) + x] = T::of(y as f64 / side as f64);
            }
        }
        f
    }

    pub fn from_fn(side: usize, f: impl Fn(Point) -> T) -> Self {
        let mut field = Self::constant(side, T::zero());
        for y in 0..=side {
            for x in 0..=side {
                field.values[y * (side + 1) + x] = f(Point::new(x as i64, y as i64));
            }
        }
        field
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn index(&self, p: Point) -> usize {
        p.y as usize * (self.side + 1) + p.x as usize
    }

    pub fn get(&self, p: Point) -> T {
        self.values[self.index(p)]
    }

    pub fn set(&mut self, p: Point, value: T) {
        let i = self.index(p);
        self.values[i] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Bottom row at 0 and top row at 1.
    pub fn is_pinned(&self) -> bool {
        let a = self.side as i64;
        (0..=a).all(|x| self.get(Point::new(x, 0)) == T::zero() && self.get(Point::new(x, a)) == T::one())
    }

    pub fn min_max(&self) -> (T, T) {
        self.values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// `ℰ(f, f) = Σ_e w_e (f(head) − f(base))²` with the weights' border convention.
pub fn dirichlet_energy<T: Scalar>(f: &PotentialField<T>, weights: &NetworkWeights<T>) -> T {
    assert_eq!(
        f.side(),
        weights.side(),
        "potential and weights live on different squares"
    );
    let mut acc = CompensatedSum::new();
    for e in weights.edges() {
        let w = weights.weight(e).expect("edge inside square");
        let (p, q) = e.endpoints();
        let d = f.get(q) - f.get(p);
        acc.add(w * d * d);
    }
    acc.value()
}

/// Paste `m²` shifted copies of a potential on `[0, a]²` into `[0, m a]²`:
/// `f(x, y) = (k + h(x mod a, y − k a)) / m` on the k-th band of rows.
pub fn paste_potential<T: Scalar>(h: &PotentialField<T>, m: usize) -> PotentialField<T> {
    let a = h.side() as i64;
    let inv = T::one() / T::of(m as f64);
    PotentialField::from_fn(h.side() * m, |p| {
        let k = if p.y == a * m as i64 { m as i64 - 1 } else { p.y / a };
        let local = Point::new(if p.x % a == 0 && p.x > 0 { a } else { p.x % a }, p.y - k * a);
        (T::of(k as f64) + h.get(local)) * inv
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when `‖r‖ ≤ residual_tol · ‖b‖`.
    pub residual_tol: f64,
    /// Iteration cap; 0 selects `max(1000, 4 n)` for `n` unknowns.
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_iterations: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub potential: PotentialField<T>,
    /// Minimal Dirichlet energy, i.e. the effective conductance across the square.
    pub energy: T,
    pub iterations: usize,
    pub relative_residual: f64,
}

const NONE: u32 = u32::MAX;

/// Reduced Laplacian on the free rows `1..a-1`, nodes of zero degree removed.
struct Reduced<T> {
    nodes: Vec<Point>,
    diag: Vec<T>,
    neighbours: Vec<[(u32, T); 4]>,
    rhs: Vec<T>,
}

fn reduce<T: Scalar>(w: &NetworkWeights<T>) -> Reduced<T> {
    let a = w.side() as i64;
    let id = |p: Point| (p.y * (a + 1) + p.x) as usize;
    let mut slot = vec![NONE; ((a + 1) * (a + 1)) as usize];
    let mut nodes = Vec::new();
    let mut diag = Vec::new();
    for y in 1..a {
        for x in 0..=a {
            let p = Point::new(x, y);
            let degree = incident(w, p).fold(T::zero(), |s, (_, c)| s + c);
            if degree > T::zero() {
                slot[id(p)] = nodes.len() as u32;
                nodes.push(p);
                diag.push(degree);
            }
        }
    }
    let mut neighbours = Vec::with_capacity(nodes.len());
    let mut rhs = Vec::with_capacity(nodes.len());
    for &p in &nodes {
        let mut row = [(NONE, T::zero()); 4];
        let mut b = T::zero();
        for (k, (q, c)) in incident(w, p).enumerate() {
            if q.y == a {
                b = b + c;
            } else if q.y > 0 {
                row[k] = (slot[id(q)], c);
            }
        }
        neighbours.push(row);
        rhs.push(b);
    }
    Reduced {
        nodes,
        diag,
        neighbours,
        rhs,
    }
}

/// Neighbours of `p` inside the square with the effective weight of the joining edge.
fn incident<T: Scalar>(w: &NetworkWeights<T>, p: Point) -> impl Iterator<Item = (Point, T)> + '_ {
    p.neighbours().into_iter().filter_map(move |q| {
        let e = Edge::between(p, q)?;
        w.weight(e).map(|c| (q, c))
    })
}

impl<T: Scalar> Reduced<T> {
    fn apply(&self, x: &[T], out: &mut [T]) {
        for (i, row) in self.neighbours.iter().enumerate() {
            let mut s = self.diag[i] * x[i];
            for &(j, c) in row {
                if j != NONE {
                    s = s - c * x[j as usize];
                }
            }
            out[i] = s;
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Minimise the Dirichlet energy over potentials pinned to 0 on the bottom row and 1 on
/// the top row (free sides), by Jacobi-preconditioned conjugate gradients.
pub fn solve_potential<T: Scalar>(
    weights: &NetworkWeights<T>,
    opts: &SolverOptions,
    initial: Option<&PotentialField<T>>,
) -> Result<Solution<T>, ResistanceError> {
    weights.check()?;
    let a = weights.side();
    let sys = reduce(weights);
    let n = sys.nodes.len();
    let start = initial
        .filter(|f| f.side() == a)
        .cloned()
        .unwrap_or_else(|| PotentialField::linear(a));
    let mut x: Vec<T> = sys.nodes.iter().map(|&p| start.get(p)).collect();
    let mut r = vec![T::zero(); n];
    sys.apply(&x, &mut r);
    for i in 0..n {
        r[i] = sys.rhs[i] - r[i];
    }
    let b_norm = dot(&sys.rhs, &sys.rhs).sqrt();
    let target = T::of(opts.residual_tol) * b_norm;
    let cap = if opts.max_iterations == 0 {
        (4 * n).max(1000)
    } else {
        opts.max_iterations
    };
    let mut z: Vec<T> = r.iter().zip(&sys.diag).map(|(&r, &d)| r / d).collect();
    let mut p = z.clone();
    let mut q = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut r_norm = dot(&r, &r).sqrt();
    while r_norm > target && b_norm > T::zero() {
        if iterations >= cap {
            return Err(ResistanceError::SolverDiverged {
                iterations,
                relative_residual: (r_norm / b_norm).as_f64(),
            });
        }
        sys.apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] / sys.diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        r_norm = dot(&r, &r).sqrt();
        iterations += 1;
    }
    let mut potential = PotentialField::linear(a);
    // isolated free nodes do not affect the energy; park them at 0
    for y in 1..a as i64 {
        for xx in 0..=a as i64 {
            potential.set(Point::new(xx, y), T::zero());
        }
    }
    for (i, &node) in sys.nodes.iter().enumerate() {
        potential.set(node, x[i]);
    }
    let energy = dirichlet_energy(&potential, weights);
    let relative_residual = if b_norm > T::zero() {
        (r_norm / b_norm).as_f64()
    } else {
        0.0
    };
    Ok(Solution {
        potential,
        energy,
        iterations,
        relative_residual,
    })
}
