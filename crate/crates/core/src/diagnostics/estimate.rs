//! Monte Carlo estimators of `Ψ^F_ε = E⁰_ω F(X^{(ε)})`, quenched and annealed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, EnvironmentSpec, Profile, ScaleParams};
use crate::lattice::Point;
use crate::rng::{derive_seed, Domain};
use crate::scalar::accurate_sum;
use crate::walk::{
    crossing_event, diffusive_rescale, evaluate_functional, raw_horizon, simulate_or_truncate, Bump, Conductances,
    FunctionalSpec, LevelField, PathKey, Uniform, DEFAULT_EVENT_CAP,
};

use super::reference::{bm_reference, ReferenceOptions};
use super::stats::{mean_stderr, separation, Interval};
use super::DiagnosticsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFunctional {
    pub id: String,
    #[serde(flatten)]
    pub spec: FunctionalSpec,
}

/// A fixed, versioned list of functionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalLibrary {
    pub version: u32,
    pub functionals: Vec<NamedFunctional>,
}

impl FunctionalLibrary {
    pub const STANDARD_VERSION: u32 = 1;

    /// Eight functionals on `[0, 1]` with one to four times and radii between 1 and 2.5.
    pub fn standard() -> Self {
        let b = Bump::new;
        let f = |id: &str, times: Vec<f64>, bumps: Vec<Bump>| NamedFunctional {
            id: id.to_string(),
            spec: FunctionalSpec { times, bumps },
        };
        Self {
            version: Self::STANDARD_VERSION,
            functionals: vec![
                f("centre-1", vec![1.0], vec![b([0.0, 0.0], 1.5, 1.0)]),
                f("east-1", vec![1.0], vec![b([1.0, 0.0], 1.0, 1.0)]),
                f("south-half", vec![0.5], vec![b([0.0, -0.5], 1.0, 1.0)]),
                f("diagonal-1", vec![1.0], vec![b([-1.0, 1.0], 2.0, 1.0)]),
                f(
                    "stay-2",
                    vec![0.5, 1.0],
                    vec![b([0.0, 0.0], 1.5, 1.0), b([0.0, 0.0], 1.5, 1.0)],
                ),
                f(
                    "drift-2",
                    vec![0.25, 1.0],
                    vec![b([0.5, 0.5], 1.5, 1.0), b([1.0, 1.0], 1.5, 1.0)],
                ),
                f(
                    "turn-3",
                    vec![0.25, 0.5, 1.0],
                    vec![
                        b([0.0, 0.0], 2.0, 1.0),
                        b([0.5, 0.0], 2.0, 1.0),
                        b([0.5, 0.5], 2.0, 1.0),
                    ],
                ),
                f(
                    "tube-4",
                    vec![0.25, 0.5, 0.75, 1.0],
                    vec![
                        b([0.0, 0.0], 2.5, 1.0),
                        b([0.0, 0.0], 2.5, 1.0),
                        b([0.0, 0.0], 2.5, 1.0),
                        b([0.0, 0.0], 2.5, 1.0),
                    ],
                ),
            ],
        }
    }

    pub fn horizon(&self) -> f64 {
        self.functionals.iter().map(|f| f.spec.last_time()).fold(0.0, f64::max)
    }

    pub fn check(&self) -> Result<(), DiagnosticsError> {
        if self.functionals.is_empty() {
            return Err(DiagnosticsError::Config("empty functional library".into()));
        }
        for f in &self.functionals {
            f.spec.check()?;
        }
        Ok(())
    }
}

/// What is evaluated on each rescaled path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Functional(FunctionalSpec),
    /// Indicator of the obstacle-crossing event.
    Crossing,
}

impl Statistic {
    fn horizon(&self) -> f64 {
        match self {
            Statistic::Functional(f) => f.last_time(),
            Statistic::Crossing => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub eps: f64,
    pub paths: usize,
    pub seed: u64,
    pub event_cap: u64,
}

impl SimulationOptions {
    pub fn new(eps: f64, paths: usize, seed: u64) -> Self {
        Self {
            eps,
            paths,
            seed,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

/// Per-path values of several statistics for one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct PathValues {
    /// `values[s][p]`: statistic `s` on path `p` (truncated paths omitted).
    pub values: Vec<Vec<f64>>,
    pub truncated: usize,
}

/// Simulate `opts.paths` walks from `start`, rescale them around `start` and evaluate
/// every statistic. Path `p` uses the stream `(opts.seed, p)`.
pub fn path_values<C: Conductances + ?Sized>(
    field: &C,
    start: Point,
    stats: &[Statistic],
    opts: &SimulationOptions,
) -> Result<PathValues, DiagnosticsError> {
    let horizon = stats.iter().map(Statistic::horizon).fold(0.0, f64::max);
    let raw = raw_horizon(opts.eps, horizon);
    let rows: Vec<Option<Vec<f64>>> = (0..opts.paths)
        .into_par_iter()
        .map(|p| {
            let path = simulate_or_truncate(field, start, raw, PathKey::new(opts.seed, p as u64), opts.event_cap)?;
            if path.truncated {
                return Ok(None);
            }
            let scaled = diffusive_rescale(&path.centred(), opts.eps, horizon)?;
            Ok(Some(
                stats
                    .iter()
                    .map(|s| match s {
                        Statistic::Functional(f) => evaluate_functional(f, &scaled),
                        Statistic::Crossing => f64::from(u8::from(crossing_event(&scaled))),
                    })
                    .collect(),
            ))
        })
        .collect::<Result<_, DiagnosticsError>>()?;
    let truncated = rows.iter().filter(|r| r.is_none()).count();
    let mut values = vec![Vec::with_capacity(rows.len()); stats.len()];
    for row in rows.into_iter().flatten() {
        for (column, v) in values.iter_mut().zip(row) {
            column.push(v);
        }
    }
    Ok(PathValues { values, truncated })
}

/// Environments over which the annealed average is taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// `μ ≡ 1`; every "environment" is the same, only the paths differ.
    Uniform,
    /// Independent offset draws for a fixed ladder; the walk uses the top level.
    Sampled { scales: Vec<ScaleParams>, profile: Profile },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvEstimate {
    pub env_seed: u64,
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub functional: String,
    pub epsilon: f64,
    pub environments: Vec<EnvEstimate>,
    /// Path-count-weighted mean of the per-environment means.
    pub pooled_mean: f64,
    /// Standard error of the pooled mean: the between-environment (cluster) estimate,
    /// floored by the pooled within-environment path error, which it underestimates badly
    /// when there are only a few environments.
    pub pooled_stderr: f64,
    pub across_env_variance: f64,
    /// Seeds of environments in which some path hit the event cap.
    pub truncated_environments: Vec<u64>,
}

fn pool(functional: &str, eps: f64, environments: Vec<EnvEstimate>, truncated: Vec<u64>) -> EstimatorReport {
    let total: f64 = environments.iter().map(|e| e.paths as f64).sum();
    let pooled_mean = accurate_sum(environments.iter().map(|e| e.paths as f64 * e.mean)) / total;
    let m = environments.len();
    let (pooled_stderr, across_env_variance) = if m < 2 {
        (environments.first().map_or(0.0, |e| e.stderr), 0.0)
    } else {
        let means: Vec<f64> = environments.iter().map(|e| e.mean).collect();
        let var = mean_stderr(&means).1.powi(2) * m as f64;
        let cluster = accurate_sum(
            environments
                .iter()
                .map(|e| (e.paths as f64 / total * (e.mean - pooled_mean)).powi(2)),
        ) * m as f64
            / (m as f64 - 1.0);
        let within = accurate_sum(environments.iter().map(|e| (e.paths as f64 / total * e.stderr).powi(2)));
        (cluster.max(within).sqrt(), var)
    };
    EstimatorReport {
        functional: functional.to_string(),
        epsilon: eps,
        environments,
        pooled_mean,
        pooled_stderr,
        across_env_variance,
        truncated_environments: truncated,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealedOptions {
    pub eps: f64,
    pub environments: usize,
    pub paths: usize,
    pub seed: u64,
    pub event_cap: u64,
}

/// Environment `i` of an annealed run: its seed and (for sampled ensembles) the
/// compiled environment.
pub fn ensemble_member(
    ensemble: &Ensemble,
    seed: u64,
    i: usize,
) -> Result<(u64, Option<Environment>), DiagnosticsError> {
    let env_seed = derive_seed(seed, Domain::Environments, i as u64);
    Ok(match ensemble {
        Ensemble::Uniform => (env_seed, None),
        Ensemble::Sampled { scales, profile } => (
            env_seed,
            Some(Environment::new(EnvironmentSpec::sample(
                scales.clone(),
                *profile,
                env_seed,
            ))?),
        ),
    })
}

/// Annealed estimates of every functional of `library`, all evaluated on the same paths.
pub fn annealed_estimate(
    ensemble: &Ensemble,
    library: &FunctionalLibrary,
    opts: &AnnealedOptions,
) -> Result<Vec<EstimatorReport>, DiagnosticsError> {
    library.check()?;
    let stats: Vec<Statistic> = library
        .functionals
        .iter()
        .map(|f| Statistic::Functional(f.spec.clone()))
        .collect();
    let per_env: Vec<(u64, PathValues)> = (0..opts.environments)
        .into_par_iter()
        .map(|i| {
            let (env_seed, env) = ensemble_member(ensemble, opts.seed, i)?;
            let sim = SimulationOptions {
                eps: opts.eps,
                paths: opts.paths,
                seed: derive_seed(opts.seed, Domain::Paths, i as u64),
                event_cap: opts.event_cap,
            };
            let values = match &env {
                None => path_values(&Uniform(1.0), Point::ORIGIN, &stats, &sim)?,
                Some(env) => path_values(&LevelField::top(env), Point::ORIGIN, &stats, &sim)?,
            };
            Ok((env_seed, values))
        })
        .collect::<Result<_, DiagnosticsError>>()?;
    let truncated: Vec<u64> = per_env
        .iter()
        .filter(|(_, v)| v.truncated > 0)
        .map(|(s, _)| *s)
        .collect();
    Ok(library
        .functionals
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let envs = per_env
                .iter()
                .map(|(seed, v)| {
                    let (mean, stderr) = mean_stderr(&v.values[k]);
                    EnvEstimate {
                        env_seed: *seed,
                        mean,
                        stderr,
                        paths: v.values[k].len(),
                    }
                })
                .collect();
            pool(&f.id, opts.eps, envs, truncated.clone())
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchedEstimate {
    pub env_seed: u64,
    pub epsilon: f64,
    pub estimate: Interval,
    pub paths: usize,
    pub truncated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub estimates: Vec<QuenchedEstimate>,
    /// For each `ε`: the largest pairwise separation in standard-error units and the
    /// positions (in `estimates`) of the pair attaining it.
    pub separations: Vec<(f64, f64, (usize, usize))>,
    pub max_separation: f64,
}

/// Quenched estimates `Ψ̂_ε` in each environment of `env_seeds` for each `ε`, and their
/// largest pairwise separations. Environment slot `i` draws its paths from
/// `derive_seed(seed, Paths, i)`, so repeating a seed gives independent path sets.
pub fn quenched_spread(
    scales: &[ScaleParams],
    profile: Profile,
    statistic: &Statistic,
    eps_list: &[f64],
    env_seeds: &[u64],
    paths: usize,
    seed: u64,
) -> Result<SpreadReport, DiagnosticsError> {
    if env_seeds.len() < 2 {
        return Err(DiagnosticsError::Config(
            "at least two environment seeds are required".into(),
        ));
    }
    let envs: Vec<Environment> = env_seeds
        .iter()
        .map(|s| Environment::new(EnvironmentSpec::sample(scales.to_vec(), profile, *s)))
        .collect::<Result<_, _>>()?;
    let mut estimates = Vec::new();
    let mut separations = Vec::new();
    for &eps in eps_list {
        let first = estimates.len();
        for (i, env) in envs.iter().enumerate() {
            let sim = SimulationOptions::new(eps, paths, derive_seed(seed, Domain::Paths, i as u64));
            let v = path_values(
                &LevelField::top(env),
                Point::ORIGIN,
                std::slice::from_ref(statistic),
                &sim,
            )?;
            estimates.push(QuenchedEstimate {
                env_seed: env_seeds[i],
                epsilon: eps,
                estimate: Interval::from_values(&v.values[0]),
                paths: v.values[0].len(),
                truncated: v.truncated,
            });
        }
        let mut best = (0.0, (first, first + 1));
        for i in first..estimates.len() {
            for j in i + 1..estimates.len() {
                let (a, b) = (estimates[i].estimate, estimates[j].estimate);
                let s = separation((a.estimate, a.stderr), (b.estimate, b.stderr));
                if s > best.0 {
                    best = (s, (i, j));
                }
            }
        }
        separations.push((eps, best.0, best.1));
    }
    let max_separation = separations.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(SpreadReport {
        estimates,
        separations,
        max_separation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyEntry {
    pub id: String,
    pub estimate: f64,
    pub stderr: f64,
    pub reference: f64,
    pub reference_stderr: f64,
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub epsilon: f64,
    pub library_version: u32,
    pub entries: Vec<DiscrepancyEntry>,
    /// `max_F |Ψ̂_ε(F) − E F(W)|`.
    pub discrepancy: f64,
    pub max_stderr: f64,
}

/// Largest deviation over the library between quenched estimates from `start` and the
/// Brownian reference values.
pub fn functional_discrepancy<C: Conductances + ?Sized>(
    field: &C,
    start: Point,
    library: &FunctionalLibrary,
    opts: &SimulationOptions,
    reference: &ReferenceOptions,
) -> Result<DiscrepancyReport, DiagnosticsError> {
    library.check()?;
    let stats: Vec<Statistic> = library
        .functionals
        .iter()
        .map(|f| Statistic::Functional(f.spec.clone()))
        .collect();
    let v = path_values(field, start, &stats, opts)?;
    let entries: Vec<DiscrepancyEntry> = library
        .functionals
        .iter()
        .zip(&v.values)
        .map(|(f, values)| {
            let (estimate, stderr) = mean_stderr(values);
            let r = bm_reference(&f.spec, reference);
            DiscrepancyEntry {
                id: f.id.clone(),
                estimate,
                stderr,
                reference: r.value,
                reference_stderr: r.stderr,
                difference: (estimate - r.value).abs(),
            }
        })
        .collect();
    Ok(DiscrepancyReport {
        epsilon: opts.eps,
        library_version: library.version,
        discrepancy: entries.iter().map(|e| e.difference).fold(0.0, f64::max),
        max_stderr: entries
            .iter()
            .map(|e| e.stderr.hypot(e.reference_stderr))
            .fold(0.0, f64::max),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(eps: f64, environments: usize, paths: usize) -> AnnealedOptions {
        AnnealedOptions {
            eps,
            environments,
            paths,
            seed: 42,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    #[test]
    fn standard_library_is_valid() {
        let lib = FunctionalLibrary::standard();
        assert_eq!(lib.functionals.len(), 8);
        lib.check().unwrap();
        assert_eq!(lib.horizon(), 1.0);
        let text = serde_json::to_string(&lib).unwrap();
        assert_eq!(serde_json::from_str::<FunctionalLibrary>(&text).unwrap(), lib);
    }

    #[test]
    fn single_path_single_env_is_one_evaluation() {
        let lib = FunctionalLibrary::standard();
        let reports = annealed_estimate(&Ensemble::Uniform, &lib, &quick(0.25, 1, 1)).unwrap();
        let sim = SimulationOptions::new(0.25, 1, derive_seed(42, Domain::Paths, 0));
        let path = simulate_or_truncate(
            &Uniform(1.0),
            Point::ORIGIN,
            raw_horizon(0.25, 1.0),
            PathKey::new(sim.seed, 0),
            sim.event_cap,
        )
        .unwrap();
        let scaled = diffusive_rescale(&path, 0.25, 1.0).unwrap();
        for (r, f) in reports.iter().zip(&lib.functionals) {
            assert_eq!(r.environments.len(), 1);
            assert_eq!(r.pooled_mean, evaluate_functional(&f.spec, &scaled));
            assert_eq!(r.pooled_stderr, 0.0);
        }
    }

    #[test]
    fn pooled_mean_is_weighted_mean_of_quenched_means() {
        let lib = FunctionalLibrary::standard();
        let scales = vec![ScaleParams::new(1, 96, 4, 24).with_k(10.0)];
        let ensemble = Ensemble::Sampled {
            scales,
            profile: Profile::Desk,
        };
        let reports = annealed_estimate(&ensemble, &lib, &quick(0.25, 5, 40)).unwrap();
        for r in &reports {
            let total: usize = r.environments.iter().map(|e| e.paths).sum();
            let weighted: f64 = r.environments.iter().map(|e| e.mean * e.paths as f64).sum::<f64>() / total as f64;
            assert!((weighted - r.pooled_mean).abs() < 1e-14);
            assert!(r.pooled_stderr >= 0.0 && r.environments.iter().all(|e| e.stderr >= 0.0));
        }
        let again = annealed_estimate(&ensemble, &lib, &quick(0.25, 5, 40)).unwrap();
        assert_eq!(reports, again);
    }

    #[test]
    fn stderr_scales_with_path_count() {
        let lib = FunctionalLibrary {
            version: 0,
            functionals: vec![FunctionalLibrary::standard().functionals[0].clone()],
        };
        let se = |p| annealed_estimate(&Ensemble::Uniform, &lib, &quick(0.25, 1, p)).unwrap()[0].pooled_stderr;
        let ratio = se(8000) / se(4000);
        assert!(
            (ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.2 * std::f64::consts::FRAC_1_SQRT_2,
            "{ratio}"
        );
        let ratio4 = se(16000) / se(4000);
        assert!((ratio4 - 0.5).abs() < 0.1, "{ratio4}");
    }

    #[test]
    fn constant_functional_has_no_spread() {
        let scales = vec![ScaleParams::new(1, 96, 4, 24).with_k(10.0)];
        let one = Statistic::Functional(FunctionalSpec::single(1.0, Bump::constant(1.0)));
        let r = quenched_spread(&scales, Profile::Desk, &one, &[0.25], &[1, 2, 3], 50, 0).unwrap();
        assert_eq!(r.max_separation, 0.0);
        assert!(r.estimates.iter().all(|e| e.estimate.estimate == 1.0));
    }

    #[test]
    fn discrepancy_is_monotone_in_the_library() {
        let lib = FunctionalLibrary::standard();
        let sub = FunctionalLibrary {
            version: lib.version,
            functionals: lib.functionals[..3].to_vec(),
        };
        let opts = SimulationOptions::new(0.25, 400, 3);
        let full =
            functional_discrepancy(&Uniform(1.0), Point::ORIGIN, &lib, &opts, &ReferenceOptions::default()).unwrap();
        let part =
            functional_discrepancy(&Uniform(1.0), Point::ORIGIN, &sub, &opts, &ReferenceOptions::default()).unwrap();
        assert!(part.discrepancy <= full.discrepancy);
        for (a, b) in part.entries.iter().zip(&full.entries) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn huge_bumps_have_no_discrepancy_beyond_noise() {
        let lib = FunctionalLibrary {
            version: 0,
            functionals: (0..8)
                .map(|i| NamedFunctional {
                    id: format!("flat-{i}"),
                    spec: FunctionalSpec::single(0.25 + 0.1 * i as f64, Bump::new([0.0, 0.0], 1e3, 1.0)),
                })
                .collect(),
        };
        let r = functional_discrepancy(
            &Uniform(1.0),
            Point::ORIGIN,
            &lib,
            &SimulationOptions::new(0.25, 200, 9),
            &ReferenceOptions::default(),
        )
        .unwrap();
        assert!(r.discrepancy <= 3.0 * r.max_stderr + 1e-5, "{r:?}");
    }
}
