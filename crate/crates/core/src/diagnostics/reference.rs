//! Brownian reference values `E F(W)` for bump functionals.
//!
//! The bumps are tensor products and the two coordinates of `W` are independent, so
//! `E F(W)` splits into the product of the heights and two one-dimensional expectations
//! `E ∏ g_i(B_{t_i})`. Each of these is evaluated by the backward Markov recursion
//! `v_k(x) = g_k(x) ∫ φ_{Δ_{k+1}}(y − x) v_{k+1}(y) dy` with composite Gauss–Legendre
//! panels on the support of each `g_k`, split at the kinks of the smoothstep profile and
//! no wider than the standard deviation of the incoming Gaussian kernel.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Domain};
use crate::walk::{Bump, FunctionalSpec};

use super::stats::mean_stderr;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Largest number of times handled by quadrature; beyond it Monte Carlo is used.
    pub max_quadrature_times: usize,
    pub mc_paths: u64,
    pub seed: u64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            nodes: 40,
            max_quadrature_times: 4,
            mc_paths: 1_000_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmReference {
    pub value: f64,
    /// Zero for quadrature.
    pub stderr: f64,
    pub method: ReferenceMethod,
}

const MAX_PANELS: usize = 4096;

/// Factor of one coordinate at one distinct time: the product of the bump profiles.
struct Factor<'a> {
    time: f64,
    bumps: Vec<&'a Bump>,
    support: (f64, f64),
}

impl Factor<'_> {
    fn eval(&self, axis: usize, x: f64) -> f64 {
        self.bumps.iter().map(|b| b.profile(axis, x)).product()
    }

    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        let (lo, hi) = self.support;
        let mut points = vec![lo, hi];
        for b in &self.bumps {
            let c = b.center[axis];
            points.extend(
                [c - b.radius, c, c + b.radius]
                    .into_iter()
                    .filter(|p| *p > lo && *p < hi),
            );
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
    }
}

fn gaussian(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Quadrature points on the support of `factor`, panels no wider than `width`.
fn panel_nodes(breaks: &[f64], width: f64, rule: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let total: f64 = breaks.last().unwrap() - breaks[0];
    let width = width.max(total / MAX_PANELS as f64);
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        let pieces = ((len / width).ceil() as usize).max(1);
        let h = len / pieces as f64;
        for p in 0..pieces {
            let (a, b) = (w[0] + p as f64 * h, w[0] + (p + 1) as f64 * h);
            for (x, wt) in rule.0.iter().zip(&rule.1) {
                out.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * wt));
            }
        }
    }
    out
}

/// `E ∏ g_k(B_{τ_k})` for one coordinate.
fn coordinate_expectation(spec: &FunctionalSpec, axis: usize, nodes: usize) -> f64 {
    let mut factors: Vec<Factor> = Vec::new();
    for (t, b) in spec.times.iter().zip(&spec.bumps) {
        if b.radius.is_infinite() {
            continue;
        }
        let (lo, hi) = (b.center[axis] - b.radius, b.center[axis] + b.radius);
        match factors.last_mut() {
            Some(f) if f.time == *t => {
                f.bumps.push(b);
                f.support = (f.support.0.max(lo), f.support.1.min(hi));
            }
            _ => factors.push(Factor {
                time: *t,
                bumps: vec![b],
                support: (lo, hi),
            }),
        }
    }
    if factors.is_empty() {
        return 1.0;
    }
    if factors.iter().any(|f| f.support.0 >= f.support.1) {
        return 0.0;
    }
    let mut scale = 1.0;
    if factors[0].time == 0.0 {
        // B_0 = 0 is deterministic
        scale = factors[0].eval(axis, 0.0);
        factors.remove(0);
        if factors.is_empty() || scale == 0.0 {
            return scale;
        }
    }
    let rule = gauss_legendre(nodes);
    let mut prev_time = 0.0;
    let grids: Vec<Vec<(f64, f64)>> = factors
        .iter()
        .map(|f| {
            let sd = (f.time - prev_time).sqrt();
            prev_time = f.time;
            panel_nodes(&f.breakpoints(axis), sd, &rule)
        })
        .collect();

    // values of v_k at the nodes of factor k, from the last factor backwards
    let last = factors.len() - 1;
    let mut v: Vec<f64> = grids[last].iter().map(|(y, _)| factors[last].eval(axis, *y)).collect();
    for k in (0..last).rev() {
        let var = factors[k + 1].time - factors[k].time;
        let next = &grids[k + 1];
        v = grids[k]
            .iter()
            .map(|(x, _)| {
                let g = factors[k].eval(axis, *x);
                if g == 0.0 {
                    return 0.0;
                }
                let s: f64 = next
                    .iter()
                    .zip(&v)
                    .map(|((y, w), vy)| w * gaussian(y - x, var) * vy)
                    .sum();
                g * s
            })
            .collect();
    }
    let var = factors[0].time;
    scale
        * grids[0]
            .iter()
            .zip(&v)
            .map(|((y, w), vy)| w * gaussian(*y, var) * vy)
            .sum::<f64>()
}

/// `E F(W)` for standard planar Brownian motion started at the origin.
pub fn bm_reference(spec: &FunctionalSpec, opts: &ReferenceOptions) -> BmReference {
    if spec.len() > opts.max_quadrature_times {
        return bm_monte_carlo(spec, opts.mc_paths, opts.seed);
    }
    let heights: f64 = spec.bumps.iter().map(|b| b.height).product();
    let value = heights * coordinate_expectation(spec, 0, opts.nodes) * coordinate_expectation(spec, 1, opts.nodes);
    BmReference {
        value,
        stderr: 0.0,
        method: ReferenceMethod::Quadrature,
    }
}

/// Monte Carlo estimate of `E F(W)` from exact Gaussian increments at the functional's
/// times.
pub fn bm_monte_carlo(spec: &FunctionalSpec, paths: u64, seed: u64) -> BmReference {
    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Domain::Brownian, i);
            let (mut t, mut w) = (0.0, [0.0f64; 2]);
            let mut value = 1.0;
            for (s, b) in spec.times.iter().zip(&spec.bumps) {
                let sd = (s - t).sqrt();
                t = *s;
                for c in &mut w {
                    *c += sd * rng.sample::<f64, _>(StandardNormal);
                }
                value *= b.eval(w);
            }
            value
        })
        .collect();
    let (value, stderr) = mean_stderr(&values);
    BmReference {
        value,
        stderr,
        method: ReferenceMethod::MonteCarlo,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::smoothstep;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        for n in [1, 2, 5, 40, 60] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * n).min(30) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    /// Plain trapezoid on a fine grid for a one-time functional.
    fn one_time_oracle(t: f64, b: &Bump) -> f64 {
        let axis = |c: f64| {
            let n = 200_000;
            let (lo, hi) = (c - b.radius, c + b.radius);
            let h = (hi - lo) / n as f64;
            (0..=n)
                .map(|i| {
                    let x = lo + i as f64 * h;
                    let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
                    wgt * h * smoothstep((x - c) / b.radius) * gaussian(x, t)
                })
                .sum::<f64>()
        };
        b.height * axis(b.center[0]) * axis(b.center[1])
    }

    #[test]
    fn single_time_against_direct_integration() {
        for (t, b) in [
            (1.0, Bump::new([0.0, 0.0], 1.0, 1.0)),
            (0.3, Bump::new([0.4, -0.2], 0.7, 2.0)),
            (2.0, Bump::new([1.5, 1.0], 3.0, 0.5)),
        ] {
            let q = bm_reference(&FunctionalSpec::single(t, b), &ReferenceOptions::default()).value;
            let oracle = one_time_oracle(t, &b);
            assert!((q - oracle).abs() < 1e-9, "{q} vs {oracle}");
        }
    }

    #[test]
    fn shrinking_and_covering_bumps() {
        let opts = ReferenceOptions::default();
        let tiny = bm_reference(&FunctionalSpec::single(1.0, Bump::new([0.0, 0.0], 1e-3, 1.0)), &opts).value;
        // bounded by height × P(W₁ in the support square)
        assert!(tiny > 0.0 && tiny <= (2e-3f64).powi(2) * gaussian(0.0, 1.0).powi(2) * 1.0001);
        let big = bm_reference(&FunctionalSpec::single(1.0, Bump::new([0.0, 0.0], 1e4, 1.0)), &opts).value;
        assert!((big - 1.0).abs() < 1e-6, "{big}");
    }

    #[test]
    fn node_count_stability() {
        let spec = FunctionalSpec::new(
            vec![0.25, 0.5, 0.5, 1.0],
            vec![
                Bump::new([0.3, 0.0], 1.0, 1.0),
                Bump::new([0.0, 0.5], 1.5, 1.0),
                Bump::new([0.5, 0.0], 2.0, 1.0),
                Bump::new([1.0, -1.0], 2.0, 0.8),
            ],
        )
        .unwrap();
        let at = |nodes| {
            bm_reference(
                &spec,
                &ReferenceOptions {
                    nodes,
                    ..Default::default()
                },
            )
            .value
        };
        let (a, b) = (at(40), at(60));
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn time_zero_and_constant_factors() {
        let opts = ReferenceOptions::default();
        let f = Bump::new([0.0, 0.0], 1.0, 1.0);
        let g = Bump::new([0.5, 0.0], 1.0, 1.0);
        let plain = bm_reference(&FunctionalSpec::single(1.0, g), &opts).value;
        let with_start = bm_reference(&FunctionalSpec::new(vec![0.0, 1.0], vec![f, g]).unwrap(), &opts).value;
        assert!((with_start - plain).abs() < 1e-12);
        let with_const = bm_reference(
            &FunctionalSpec::new(vec![0.5, 1.0], vec![Bump::constant(2.0), g]).unwrap(),
            &opts,
        )
        .value;
        assert!((with_const - 2.0 * plain).abs() < 1e-12);
        let only_const = bm_reference(&FunctionalSpec::single(1.0, Bump::constant(0.5)), &opts).value;
        assert_eq!(only_const, 0.5);
    }

    #[test]
    fn monte_carlo_fallback_beyond_four_times() {
        let b = Bump::new([0.0, 0.0], 2.0, 1.0);
        let spec = FunctionalSpec::new(vec![0.2, 0.4, 0.6, 0.8, 1.0], vec![b; 5]).unwrap();
        let opts = ReferenceOptions {
            mc_paths: 40_000,
            ..Default::default()
        };
        let mc = bm_reference(&spec, &opts);
        assert_eq!(mc.method, ReferenceMethod::MonteCarlo);
        assert!(mc.stderr > 0.0);
        let quad = bm_reference(
            &spec,
            &ReferenceOptions {
                max_quadrature_times: 8,
                ..Default::default()
            },
        );
        assert!((mc.value - quad.value).abs() < 4.0 * mc.stderr, "{mc:?} {quad:?}");
    }
}
