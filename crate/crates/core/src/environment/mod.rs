//! The hierarchical conductance field.
//!
//! A ladder of scales `(a_n, b_n, β_n)` plus nested random offsets `𝒪_n` determines the
//! whole environment. Level `n` places the obstacle atlas of [`atlas`] periodically with
//! period `a_n`, shifted by `𝒪_n`; the conductance of an edge is the class value of the
//! highest level that classes it, and 1 if no level does. Nothing is materialised:
//! every query walks the levels from the top down.

pub mod atlas;
pub mod validate;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Edge, Point};
use crate::rng::{self, Domain};

pub use atlas::{obstacle_atlas, EdgeClass, ObstacleAtlas, ObstacleGeometry, Symmetry};
pub use validate::{validate_scales, ConditionReport, ValidationReport, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("level {level}: obstacle footprint leaves the open square (0, {a})^2")]
    InfeasibleGeometry { level: u32, a: u64 },
    #[error("level {level} classes an edge as high-conductance but has no tuned K")]
    MissingTunedK { level: u32 },
    #[error("level {0} is outside the ladder")]
    LevelOutOfRange(u32),
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
    #[error("offset of level {0} violates the nesting constraint")]
    InconsistentOffsets(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Strict,
    #[default]
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(Profile::Strict),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile {other:?}")),
        }
    }
}

/// One rung of the scale ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub level: u32,
    /// Period `a_n`.
    pub a: u64,
    /// Obstacle unit `b_n`.
    pub b: u64,
    /// Obstacle offset `β_n` from the centre line.
    pub beta: u64,
    /// Low conductance override; `b^{-(1+1/n)}` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// High conductance `K_n`, normally produced by tuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_tuned: Option<f64>,
}

impl ScaleParams {
    pub fn new(level: u32, a: u64, b: u64, beta: u64) -> Self {
        Self {
            level,
            a,
            b,
            beta,
            eta: None,
            k_tuned: None,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k_tuned = Some(k);
        self
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| {
            let n = self.level.max(1) as f64;
            (self.b as f64).powf(-(1.0 + 1.0 / n))
        })
    }

    /// Time/space scale `ε_n = 1/b_n` at which level-n obstacles are visible.
    pub fn epsilon(&self) -> f64 {
        1.0 / self.b as f64
    }

    /// Number of b-tiles per side, `ℓ_n = a_n / b_n`.
    pub fn ell(&self) -> u64 {
        self.a / self.b
    }

    pub fn half(&self) -> u64 {
        self.a / 2
    }
}

/// `m_n = a_n / a_{n-1}` for every level of a ladder (`a_0 = 1`).
pub fn refinement_factors(scales: &[ScaleParams]) -> Vec<u64> {
    let mut prev = 1;
    scales
        .iter()
        .map(|s| {
            let m = s.a / prev.max(1);
            prev = s.a;
            m
        })
        .collect()
}

/// Nested offsets: `𝒪_1` uniform on `[0, a_1 − 1]²`, then `𝒪_n` uniform on the `m_n²`
/// points of `[0, a_n − 1]² ∩ (𝒪_{n−1} + a_{n−1} Z²)`.
pub fn sample_offsets(scales: &[ScaleParams], seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, Domain::Offsets, 0);
    let mut offsets = Vec::with_capacity(scales.len());
    let mut prev = Point::ORIGIN;
    let mut a_prev: i64 = 1;
    for s in scales {
        let m = (s.a as i64 / a_prev).max(1);
        let step = Point::new(rng.gen_range(0..m), rng.gen_range(0..m));
        let o = prev + step * a_prev;
        offsets.push(o);
        prev = o;
        a_prev = s.a as i64;
    }
    offsets
}

/// Check `𝒪_n ∈ [0, a_n−1]²` and `𝒪_n ≡ 𝒪_{n−1} (mod a_{n−1})`.
pub fn offsets_consistent(scales: &[ScaleParams], offsets: &[Point]) -> Result<(), EnvironmentError> {
    if scales.len() != offsets.len() {
        return Err(EnvironmentError::InvalidLadder(format!(
            "{} scales but {} offsets",
            scales.len(),
            offsets.len()
        )));
    }
    let mut prev = Point::ORIGIN;
    let mut a_prev: i64 = 1;
    for (s, &o) in scales.iter().zip(offsets) {
        let a = s.a as i64;
        let inside = (0..a).contains(&o.x) && (0..a).contains(&o.y);
        if !inside || o.modulo(a_prev) != prev.modulo(a_prev) {
            return Err(EnvironmentError::InconsistentOffsets(s.level));
        }
        prev = o;
        a_prev = a;
    }
    Ok(())
}

mod offsets_as_pairs {
    use super::Point;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(offsets: &[Point], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[i64; 2]> = offsets.iter().map(|p| [p.x, p.y]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Point>, D::Error> {
        let pairs = Vec::<[i64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[x, y]| Point::new(x, y)).collect())
    }
}

/// Complete, serialisable description of one environment sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub scales: Vec<ScaleParams>,
    #[serde(with = "offsets_as_pairs")]
    pub offsets: Vec<Point>,
    pub seed: u64,
    #[serde(default)]
    pub profile: Profile,
}

impl EnvironmentSpec {
    /// Sample offsets for `scales` from `seed`.
    pub fn sample(scales: Vec<ScaleParams>, profile: Profile, seed: u64) -> Self {
        let offsets = sample_offsets(&scales, seed);
        Self {
            scales,
            offsets,
            seed,
            profile,
        }
    }

    /// Same scales with every offset at the origin (the periodic cell used for tuning).
    pub fn pinned(&self) -> Self {
        Self {
            offsets: vec![Point::ORIGIN; self.scales.len()],
            ..self.clone()
        }
    }

    pub fn levels(&self) -> u32 {
        self.scales.len() as u32
    }

    pub fn scale(&self, level: u32) -> Result<&ScaleParams, EnvironmentError> {
        if level == 0 {
            return Err(EnvironmentError::LevelOutOfRange(level));
        }
        self.scales
            .get(level as usize - 1)
            .ok_or(EnvironmentError::LevelOutOfRange(level))
    }

    pub fn scale_mut(&mut self, level: u32) -> Result<&mut ScaleParams, EnvironmentError> {
        if level == 0 {
            return Err(EnvironmentError::LevelOutOfRange(level));
        }
        self.scales
            .get_mut(level as usize - 1)
            .ok_or(EnvironmentError::LevelOutOfRange(level))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Debug)]
struct Level {
    geometry: ObstacleGeometry,
    offset: Point,
    eta: f64,
    k: Option<f64>,
    number: u32,
}

/// Compiled, immutable view of an [`EnvironmentSpec`] answering conductance queries.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvironmentSpec,
    levels: Vec<Level>,
}

impl Environment {
    pub fn new(spec: EnvironmentSpec) -> Result<Self, EnvironmentError> {
        offsets_consistent(&spec.scales, &spec.offsets)?;
        let levels = spec
            .scales
            .iter()
            .zip(&spec.offsets)
            .map(|(s, &o)| {
                Ok(Level {
                    geometry: ObstacleGeometry::new(s)?,
                    offset: o,
                    eta: s.eta(),
                    k: s.k_tuned,
                    number: s.level,
                })
            })
            .collect::<Result<Vec<_>, EnvironmentError>>()?;
        Ok(Self { spec, levels })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn levels(&self) -> u32 {
        self.levels.len() as u32
    }

    /// Class of `edge` under level `level` alone (the field `ν^level ≠ 1`).
    pub fn level_class(&self, edge: Edge, level: u32) -> Result<Option<EdgeClass>, EnvironmentError> {
        let l = self.level(level)?;
        Ok(Self::class_at(l, edge))
    }

    fn class_at(l: &Level, edge: Edge) -> Option<EdgeClass> {
        let local = edge.translate(Point::ORIGIN - l.offset).modulo(l.geometry.side);
        l.geometry.classify(local)
    }

    fn level(&self, level: u32) -> Result<&Level, EnvironmentError> {
        if level == 0 {
            return Err(EnvironmentError::LevelOutOfRange(0));
        }
        self.levels
            .get(level as usize - 1)
            .ok_or(EnvironmentError::LevelOutOfRange(level))
    }

    /// `μⁿ_e`: value of the highest level `k ≤ n` classing `e`, else 1.
    pub fn conductance(&self, edge: Edge, level: u32) -> Result<f64, EnvironmentError> {
        if level == 0 {
            return Ok(1.0);
        }
        self.level(level)?;
        for l in self.levels[..level as usize].iter().rev() {
            match Self::class_at(l, edge) {
                Some(EdgeClass::Low) => return Ok(l.eta),
                Some(EdgeClass::High) => return l.k.ok_or(EnvironmentError::MissingTunedK { level: l.number }),
                None => {}
            }
        }
        Ok(1.0)
    }

    /// Conductance at the top level of the ladder.
    pub fn mu(&self, edge: Edge) -> Result<f64, EnvironmentError> {
        self.conductance(edge, self.levels())
    }

    /// Same as [`conductance`](Self::conductance) with `K` of level `level` replaced.
    pub fn conductance_with_k(&self, edge: Edge, level: u32, k: f64) -> Result<f64, EnvironmentError> {
        if level == 0 {
            return Ok(1.0);
        }
        let top = self.level(level)?;
        match Self::class_at(top, edge) {
            Some(EdgeClass::Low) => Ok(top.eta),
            Some(EdgeClass::High) => Ok(k),
            None => self.conductance(edge, level - 1),
        }
    }

    /// Point `w⁰_n + 𝒪_n` (anchor of the lowest obstacle) shifted into the period cell.
    pub fn obstacle_anchor(&self, level: u32) -> Result<Point, EnvironmentError> {
        let l = self.level(level)?;
        Ok(l.geometry.lowest_obstacle_anchor() + l.offset)
    }

    pub fn geometry(&self, level: u32) -> Result<ObstacleGeometry, EnvironmentError> {
        Ok(self.level(level)?.geometry)
    }

    pub fn offset(&self, level: u32) -> Result<Point, EnvironmentError> {
        Ok(self.level(level)?.offset)
    }
}

/// Classed-edge counts of one level per fundamental square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub high: usize,
    pub low: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.high + self.low
    }
}

pub fn special_edge_census(env: &Environment, level: u32) -> Result<Census, EnvironmentError> {
    let atlas = obstacle_atlas(env.spec().scale(level)?)?;
    Ok(Census {
        high: atlas.count(EdgeClass::High),
        low: atlas.count(EdgeClass::Low),
    })
}

/// Per-level contribution to the average of `μ^p` over a fundamental square:
/// `(#classed edges · mean(value^p − 1)) / (2 a_k²)`.
pub fn moment_contributions(env: &Environment, p: f64) -> Result<Vec<f64>, EnvironmentError> {
    (1..=env.levels())
        .map(|k| {
            let s = env.spec().scale(k)?;
            let census = special_edge_census(env, k)?;
            let kval = s.k_tuned.ok_or(EnvironmentError::MissingTunedK { level: k })?;
            let excess =
                census.high as f64 * (kval.powf(p) - 1.0).abs() + census.low as f64 * (s.eta().powf(p) - 1.0).abs();
            Ok(excess / (2.0 * (s.a as f64).powi(2)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn desk_ladder() -> Vec<ScaleParams> {
        vec![
            ScaleParams::new(1, 224, 8, 96).with_k(2.0),
            ScaleParams::new(2, 9856, 448, 896).with_k(3.0),
        ]
    }

    #[test]
    fn offsets_are_nested_and_deterministic() {
        for seed in 0..200 {
            let o = sample_offsets(&desk_ladder(), seed);
            offsets_consistent(&desk_ladder(), &o).unwrap();
            assert_eq!(o, sample_offsets(&desk_ladder(), seed));
        }
    }

    #[test]
    fn level_one_offsets_are_uniform() {
        let scales = vec![ScaleParams::new(1, 4, 1, 2)];
        let n = 100_000u64;
        let mut counts = [0f64; 16];
        for seed in 0..n {
            let o = sample_offsets(&scales, seed)[0];
            counts[(o.x * 4 + o.y) as usize] += 1.0;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let crit = ChiSquared::new(15.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 = {chi2}, critical = {crit}");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut spec = EnvironmentSpec::sample(desk_ladder(), Profile::Desk, 42);
        spec.scales[0].k_tuned = Some(1.234_567_890_123_456_7);
        spec.scales[0].eta = Some(0.1 + 0.2);
        let text = spec.to_json();
        assert!(text.contains("\"offsets\""));
        let back = EnvironmentSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn far_edges_have_unit_conductance() {
        let spec = EnvironmentSpec::sample(desk_ladder(), Profile::Desk, 3).pinned();
        let env = Environment::new(spec).unwrap();
        // centre of the period cell at both levels is far from every obstacle
        let e = Edge::vertical(112, 112);
        assert_eq!(env.conductance(e, 2).unwrap(), 1.0);
    }

    #[test]
    fn shifted_crossbar_edge_is_low() {
        let spec = EnvironmentSpec::sample(desk_ladder(), Profile::Desk, 11);
        let env = Environment::new(spec.clone()).unwrap();
        let (h, b, beta) = (112, 8, 96);
        let e = Edge::vertical(h - beta - b, h + 10 * b).translate(spec.offsets[0]);
        assert_eq!(env.conductance(e, 1).unwrap(), spec.scales[0].eta());
        assert_eq!(spec.scales[0].eta(), 1.0 / 64.0);
    }

    #[test]
    fn higher_level_wins() {
        // with an odd number of level-2 tiles the level-2 crossbar rows fall inside the
        // span of level-1 bars, so some level-2 crossbar edges are level-1 bar edges
        let scales = vec![
            ScaleParams::new(1, 224, 8, 96).with_k(2.0),
            ScaleParams::new(2, 14112, 672, 1344).with_k(3.0),
        ];
        for seed in 0..4 {
            let spec = EnvironmentSpec::sample(scales.clone(), Profile::Desk, seed);
            let env = Environment::new(spec.clone()).unwrap();
            let g2 = env.geometry(2).unwrap();
            let mut overlaps = 0;
            for e in g2.crossbar_edges() {
                let e = e.translate(spec.offsets[1]);
                assert_eq!(env.level_class(e, 2).unwrap(), Some(EdgeClass::Low));
                assert_eq!(env.conductance(e, 2).unwrap(), spec.scales[1].eta());
                if env.level_class(e, 1).unwrap() == Some(EdgeClass::High) {
                    assert_eq!(env.conductance(e, 1).unwrap(), 2.0);
                    overlaps += 1;
                }
            }
            assert!(overlaps > 0);
        }
    }

    #[test]
    fn missing_k_is_reported() {
        let mut scales = desk_ladder();
        scales[0].k_tuned = None;
        let env = Environment::new(EnvironmentSpec::sample(scales, Profile::Desk, 0).pinned()).unwrap();
        let g = env.geometry(1).unwrap();
        let e = g.bar_edges().next().unwrap();
        assert_eq!(env.conductance(e, 1), Err(EnvironmentError::MissingTunedK { level: 1 }));
        assert!(env.conductance(Edge::vertical(112, 112), 1).is_ok());
    }

    #[test]
    fn census_matches_atlas_and_is_translation_invariant() {
        for seed in [0, 1, 2] {
            let env = Environment::new(EnvironmentSpec::sample(desk_ladder(), Profile::Desk, seed)).unwrap();
            let c = special_edge_census(&env, 1).unwrap();
            assert_eq!(
                c,
                Census {
                    high: 4 * 20 * 8,
                    low: 4 * 2 * 17
                }
            );
            assert!(c.total() < 100 * 8);
            // brute-force count over one period cell of the shifted field
            let mut high = 0;
            let mut low = 0;
            for x in 0..224 {
                for y in 0..224 {
                    for e in [Edge::horizontal(x, y), Edge::vertical(x, y)] {
                        match env.level_class(e, 1).unwrap() {
                            Some(EdgeClass::High) => high += 1,
                            Some(EdgeClass::Low) => low += 1,
                            None => {}
                        }
                    }
                }
            }
            assert_eq!(Census { high, low }, c);
        }
    }

    #[test]
    fn statistical_stationarity() {
        // law of μ at e0 vs e0 + t over 10^4 seeds, single level
        let scales = vec![ScaleParams::new(1, 96, 4, 24).with_k(2.0)];
        let e0 = Edge::vertical(3, 5);
        let t = Point::new(17, 40);
        let mut counts = [[0f64; 3]; 2];
        let bucket = |v: f64| {
            if v == 1.0 {
                0
            } else if v < 1.0 {
                1
            } else {
                2
            }
        };
        for seed in 0..10_000 {
            let env = Environment::new(EnvironmentSpec::sample(scales.clone(), Profile::Desk, seed)).unwrap();
            counts[0][bucket(env.mu(e0).unwrap())] += 1.0;
            counts[1][bucket(env.mu(e0.translate(t)).unwrap())] += 1.0;
        }
        // two-sample chi-square on the non-empty categories
        let mut chi2 = 0.0;
        let mut dof = 0;
        for k in 0..3 {
            let total = counts[0][k] + counts[1][k];
            if total == 0.0 {
                continue;
            }
            dof += 1;
            for row in &counts {
                let expected = total / 2.0;
                chi2 += (row[k] - expected).powi(2) / expected;
            }
        }
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let crit = ChiSquared::new((dof - 1).max(1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} crit {crit} counts {counts:?}");
        assert!(counts[0][1] + counts[0][2] > 0.0);
    }

    #[test]
    fn moment_contributions_decrease_across_levels() {
        let env = Environment::new(EnvironmentSpec::sample(desk_ladder(), Profile::Desk, 0)).unwrap();
        for p in [0.5, -0.5] {
            let c = moment_contributions(&env, p).unwrap();
            assert!(c.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!(c[1] < c[0], "{c:?}");
        }
    }

    proptest! {
        #[test]
        fn conductance_is_periodic_and_positive(x in -2000i64..2000, y in -2000i64..2000, kx in -3i64..3, ky in -3i64..3, vertical: bool, seed in 0u64..50) {
            let scales = vec![ScaleParams::new(1, 224, 8, 96).with_k(2.0)];
            let env = Environment::new(EnvironmentSpec::sample(scales, Profile::Desk, seed)).unwrap();
            let e = if vertical { Edge::vertical(x, y) } else { Edge::horizontal(x, y) };
            let v = env.conductance(e, 1).unwrap();
            prop_assert!(v > 0.0);
            prop_assert!(v == 1.0 || v == 2.0 || v == env.spec().scales[0].eta());
            let shifted = e.translate(Point::new(kx * 224, ky * 224));
            prop_assert_eq!(env.conductance(shifted, 1).unwrap(), v);
            let (p, q) = e.endpoints();
            prop_assert_eq!(Edge::between(q, p).unwrap(), e);
        }
    }

    #[test]
    fn periodicity_on_sampled_pairs() {
        let env = Environment::new(EnvironmentSpec::sample(desk_ladder(), Profile::Desk, 9)).unwrap();
        let mut rng = rng::stream(1, Domain::Selection, 0);
        for _ in 0..1000 {
            let e = Edge::vertical(rng.gen_range(-500..500), rng.gen_range(-500..500));
            let shift = Point::new(rng.gen_range(-3..3), rng.gen_range(-3..3)) * 224;
            assert_eq!(
                env.level_class(e, 1).unwrap(),
                env.level_class(e.translate(shift), 1).unwrap()
            );
        }
    }
}
