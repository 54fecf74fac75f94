//! Experiments around the lowest obstacle of a level: how often the origin sits next to
//! it, and how strongly it blocks a crossing that Brownian motion makes with positive
//! probability.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{obstacle_atlas, sample_offsets, Environment, EnvironmentSpec, Profile, ScaleParams};
use crate::lattice::Point;
use crate::rng::{derive_seed, stream, Domain};
use crate::walk::{LevelField, DEFAULT_EVENT_CAP};

use super::estimate::{path_values, SimulationOptions, Statistic};
use super::stats::{mean_stderr, Interval, Proportion, Z99};
use super::DiagnosticsError;

/// `z⁰_n = w⁰_n − (b_n/2, 0)` in the fundamental square (offset zero).
pub fn hitting_centre(scale: &ScaleParams) -> Result<Point, DiagnosticsError> {
    let g = crate::environment::ObstacleGeometry::new(scale)?;
    Ok(g.lowest_obstacle_anchor() - Point::new(g.unit / 2, 0))
}

/// Representative of `v mod period` in `(−period/2, period/2]`.
fn centred_mod(v: i64, period: i64) -> i64 {
    let r = v.rem_euclid(period);
    if 2 * r > period {
        r - period
    } else {
        r
    }
}

/// Whether `point ∈ H_n(λ) = B_∞(z⁰_n, λ b_n) + 𝒪_n + a_n ℤ²` for the given offset.
pub fn in_hitting_set(scale: &ScaleParams, offset: Point, lambda: f64, point: Point) -> Result<bool, DiagnosticsError> {
    let z = hitting_centre(scale)? + offset;
    let radius = lambda * scale.b as f64;
    let a = scale.a as i64;
    let d = point - z;
    Ok(centred_mod(d.x, a).abs() as f64 <= radius && centred_mod(d.y, a).abs() as f64 <= radius)
}

/// Number of residues `o` in `candidates` with `|centred(−z − o)| ≤ radius`.
fn axis_count(candidates: impl Iterator<Item = i64>, z: i64, a: i64, radius: f64) -> u64 {
    candidates
        .filter(|o| centred_mod(-z - o, a).abs() as f64 <= radius)
        .count() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingReport {
    pub level: u32,
    pub lambda: f64,
    /// Offsets `𝒪_n ∈ [0, a_n)²` placing the origin in `H_n(λ)`.
    pub exact_count: u64,
    pub grid_size: u64,
    pub exact: f64,
    pub samples: u64,
    pub hits: u64,
    pub monte_carlo: Proportion,
    /// `|MC − exact|` in binomial standard errors at the exact probability.
    pub deviation: f64,
}

/// Offsets compatible with `lower` (the level `n − 1` offset) that place the origin in
/// `H_n(λ)`, out of the `m_n²` admissible ones.
pub fn conditional_hit_count(
    scales: &[ScaleParams],
    level: u32,
    lambda: f64,
    lower: Point,
) -> Result<(u64, u64), DiagnosticsError> {
    let scale = level_scale(scales, level)?;
    let a = scale.a as i64;
    let step = if level == 1 {
        1
    } else {
        level_scale(scales, level - 1)?.a as i64
    };
    let z = hitting_centre(scale)?;
    let radius = lambda * scale.b as f64;
    let along = |base: i64| (0..a / step).map(move |k| base.rem_euclid(step) + k * step);
    let cx = axis_count(along(lower.x), z.x, a, radius);
    let cy = axis_count(along(lower.y), z.y, a, radius);
    let m = (a / step) as u64;
    Ok((cx * cy, m * m))
}

fn level_scale(scales: &[ScaleParams], level: u32) -> Result<&ScaleParams, DiagnosticsError> {
    scales
        .get((level as usize).wrapping_sub(1))
        .ok_or_else(|| DiagnosticsError::Config(format!("level {level} is not in the ladder")))
}

/// `ℙ(0 ∈ H_n(λ))`: exact count over the offset grid and a Monte Carlo estimate from
/// independently sampled offset ladders.
pub fn hitting_probability(
    scales: &[ScaleParams],
    level: u32,
    lambda: f64,
    samples: u64,
    seed: u64,
) -> Result<HittingReport, DiagnosticsError> {
    let scale = level_scale(scales, level)?;
    if lambda * (scale.b as f64) < 1.0 {
        return Err(DiagnosticsError::Config(format!(
            "λ b_n = {} is below one lattice unit",
            lambda * scale.b as f64
        )));
    }
    let a = scale.a as i64;
    let z = hitting_centre(scale)?;
    let radius = lambda * scale.b as f64;
    let count = axis_count(0..a, z.x, a, radius) * axis_count(0..a, z.y, a, radius);
    let grid = (a * a) as u64;
    let exact = count as f64 / grid as f64;
    let ladder = &scales[..level as usize];
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| {
            let offsets = sample_offsets(ladder, derive_seed(seed, Domain::Selection, i));
            in_hitting_set(scale, offsets[level as usize - 1], lambda, Point::ORIGIN).map(u64::from)
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))?;
    let monte_carlo = Proportion::new(hits, samples);
    let sd = (exact * (1.0 - exact) / samples as f64).sqrt();
    let deviation = if sd > 0.0 {
        (monte_carlo.estimate - exact).abs() / sd
    } else if monte_carlo.estimate == exact {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(HittingReport {
        level,
        lambda,
        exact_count: count,
        grid_size: grid,
        exact,
        samples,
        hits,
        monte_carlo,
        deviation,
    })
}

/// Smallest `L∞` distance from `point` to an endpoint of a classed edge of any level.
pub fn distance_to_obstacles(env: &Environment, point: Point) -> Result<i64, DiagnosticsError> {
    let mut best = i64::MAX;
    for level in 1..=env.levels() {
        let scale = env.spec().scale(level)?;
        let a = scale.a as i64;
        let offset = env.offset(level)?;
        for (edge, _) in obstacle_atlas(scale)?.segments {
            let (p, q) = edge.endpoints();
            for e in [p, q] {
                let d = point - (e + offset);
                best = best.min(centred_mod(d.x, a).abs().max(centred_mod(d.y, a).abs()));
            }
        }
    }
    Ok(best)
}

/// First seed of the sequence `derive_seed(start, Selection, i)` whose sampled
/// environment satisfies `accept`.
pub fn find_env_seed(
    scales: &[ScaleParams],
    profile: Profile,
    start: u64,
    max_tries: u64,
    mut accept: impl FnMut(&Environment) -> Result<bool, DiagnosticsError>,
) -> Result<u64, DiagnosticsError> {
    for i in 0..max_tries {
        let seed = derive_seed(start, Domain::Selection, i);
        let env = Environment::new(EnvironmentSpec::sample(scales.to_vec(), profile, seed))?;
        if accept(&env)? {
            return Ok(seed);
        }
    }
    Err(DiagnosticsError::Config(format!(
        "no accepted environment in {max_tries} draws"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockingOptions {
    /// Replaces `η_n` of the tested level.
    pub eta: Option<f64>,
    /// Replaces `K_n` of the tested level.
    pub k: Option<f64>,
    pub paths: usize,
    pub bm_paths: usize,
    pub bm_step: f64,
    pub seed: u64,
    pub event_cap: u64,
}

impl Default for BlockingOptions {
    fn default() -> Self {
        Self {
            eta: None,
            k: None,
            paths: 20_000,
            bm_paths: 20_000,
            bm_step: 1e-4,
            seed: 0,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockingReport {
    pub level: u32,
    pub eta: f64,
    pub k: f64,
    pub epsilon: f64,
    pub start: Point,
    pub walk: Proportion,
    pub walk_truncated: usize,
    pub brownian: Interval,
    pub ratio: f64,
    /// Absent when the walk estimate is zero.
    pub ratio_stderr: Option<f64>,
    /// Upper 99% bound of the walk probability lies below the lower bound for Brownian
    /// motion.
    pub walk_below_brownian: bool,
    pub brownian_positive: bool,
}

/// Probability that a bridge of variance `dt` between `u` and `v` (both below `c`)
/// reaches `c`.
fn bridge_exit(c: f64, u: f64, v: f64, dt: f64) -> f64 {
    (-2.0 * (c - u) * (c - v) / dt).exp()
}

/// `P(|W²_s| < 3/4, |W¹_s| ≤ 2 for s ≤ 1, W¹_1 > 1)` for standard planar Brownian
/// motion: Euler steps of size `step`, and every step weighted by the probability that
/// the Brownian bridge between its endpoints stays inside the constraints.
pub fn brownian_crossing(paths: usize, step: f64, seed: u64) -> Interval {
    let steps = (1.0 / step).round().max(1.0) as usize;
    let dt = 1.0 / steps as f64;
    let sd = dt.sqrt();
    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Domain::Brownian, i as u64);
            let (mut x, mut y, mut weight) = (0.0f64, 0.0f64, 1.0f64);
            for _ in 0..steps {
                let nx = x + sd * rng.sample::<f64, _>(StandardNormal);
                let ny = y + sd * rng.sample::<f64, _>(StandardNormal);
                if nx.abs() > 2.0 || ny.abs() >= 0.75 {
                    return 0.0;
                }
                weight *= (1.0 - bridge_exit(0.75, y, ny, dt)) * (1.0 - bridge_exit(0.75, -y, -ny, dt));
                weight *= (1.0 - bridge_exit(2.0, x, nx, dt)) * (1.0 - bridge_exit(2.0, -x, -nx, dt));
                x = nx;
                y = ny;
            }
            if x > 1.0 {
                weight
            } else {
                0.0
            }
        })
        .collect();
    let (m, s) = mean_stderr(&values);
    Interval::new(m, s)
}

/// Crossing probability for the walk started next to the lowest obstacle of `level`
/// (at `z⁰_n + 𝒪_n`, `ε = 1/b_n`) against the same probability for Brownian motion.
pub fn obstacle_blocking_experiment(
    env: &Environment,
    level: u32,
    opts: &BlockingOptions,
) -> Result<BlockingReport, DiagnosticsError> {
    let mut spec = env.spec().clone();
    {
        let s = spec.scale_mut(level)?;
        if let Some(eta) = opts.eta {
            s.eta = Some(eta);
        }
        if let Some(k) = opts.k {
            s.k_tuned = Some(k);
        }
    }
    let scale = spec.scale(level)?.clone();
    let env = Environment::new(spec)?;
    let start = hitting_centre(&scale)? + env.offset(level)?;
    let eps = scale.epsilon();
    let sim = SimulationOptions {
        eps,
        paths: opts.paths,
        seed: derive_seed(opts.seed, Domain::Paths, 0),
        event_cap: opts.event_cap,
    };
    let field = LevelField { env: &env, level };
    let v = path_values(&field, start, &[Statistic::Crossing], &sim)?;
    let hits = v.values[0].iter().filter(|x| **x > 0.5).count() as u64;
    let walk = Proportion::new(hits, v.values[0].len() as u64);
    let brownian = brownian_crossing(opts.bm_paths, opts.bm_step, derive_seed(opts.seed, Domain::Brownian, 0));
    let ratio = walk.estimate / brownian.estimate;
    let ratio_stderr =
        ratio.abs() * ((walk.stderr / walk.estimate).powi(2) + (brownian.stderr / brownian.estimate).powi(2)).sqrt();
    Ok(BlockingReport {
        level,
        eta: scale.eta(),
        k: scale.k_tuned.unwrap_or(f64::NAN),
        epsilon: eps,
        start,
        walk,
        walk_truncated: v.truncated,
        walk_below_brownian: walk.upper < brownian.lower,
        brownian_positive: brownian.estimate - Z99 * brownian.stderr > 0.0,
        brownian,
        ratio,
        ratio_stderr: ratio_stderr.is_finite().then_some(ratio_stderr),
    })
}
