//! Experiment harness: every run is described by an [`ExperimentConfig`] document, which
//! is echoed verbatim into the JSON report so the run can be repeated with `rerun`.

pub mod table;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use condlab::diagnostics::{
    annealed_estimate, bm_reference, hitting_probability, obstacle_blocking_experiment, reversal_identity_check,
    AnnealedOptions, BlockingOptions, ChainDocument, DiagnosticsError, Ensemble, FunctionalLibrary, ReferenceOptions,
};
use condlab::resistance::{certify, solve_level, KCache, ResistanceError, SolverOptions, TuneOptions};
use condlab::walk::{
    diffusive_rescale, raw_horizon, simulate_or_truncate, Conductances, LevelField, PathKey, Position, Uniform,
    WalkError, DEFAULT_EVENT_CAP,
};
use condlab::{validate_scales, Environment, EnvironmentError, EnvironmentSpec, Point, Profile, ScaleParams};

pub use table::{emit_csv, Cell, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<EnvironmentError> for CliError {
    fn from(e: EnvironmentError) -> Self {
        match e {
            EnvironmentError::InfeasibleGeometry { .. }
            | EnvironmentError::InvalidLadder(_)
            | EnvironmentError::InconsistentOffsets(_) => CliError::Validation(e.to_string()),
            EnvironmentError::MissingTunedK { .. } | EnvironmentError::LevelOutOfRange(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

impl From<ResistanceError> for CliError {
    fn from(e: ResistanceError) -> Self {
        match e {
            ResistanceError::Environment(inner) => inner.into(),
            ResistanceError::TooLarge { .. } => CliError::Config(e.to_string()),
            ResistanceError::Cache(msg) => CliError::Io(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<WalkError> for CliError {
    fn from(e: WalkError) -> Self {
        match e {
            WalkError::Environment(inner) => inner.into(),
            WalkError::HorizonTooShort { .. } | WalkError::InvalidFunctional(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Config(msg) => CliError::Config(msg),
            DiagnosticsError::Walk(w) => w.into(),
            DiagnosticsError::Environment(inner) => inner.into(),
        }
    }
}

/// Conductance field seen by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldConfig {
    Uniform,
    Environment { env: EnvironmentSpec, level: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Validate {
        env: EnvironmentSpec,
        profile: Profile,
    },
    TuneK {
        env: EnvironmentSpec,
        level: u32,
        options: TuneOptions,
    },
    Resistance {
        env: EnvironmentSpec,
        level: u32,
        k: f64,
        solver: SolverOptions,
    },
    Simulate {
        field: FieldConfig,
        start: Point,
        horizon: f64,
        eps: Option<f64>,
        paths: usize,
        seed: u64,
        event_cap: u64,
    },
    CltStats {
        ensemble: Ensemble,
        library: FunctionalLibrary,
        eps: f64,
        environments: usize,
        paths: usize,
        seed: u64,
        reference: ReferenceOptions,
    },
    Blocking {
        env: EnvironmentSpec,
        level: u32,
        options: BlockingOptions,
    },
    Hitting {
        scales: Vec<ScaleParams>,
        level: u32,
        lambdas: Vec<f64>,
        samples: u64,
        seed: u64,
    },
    ReversalCheck {
        chain: ChainDocument,
    },
    EnvDump {
        env: EnvironmentSpec,
    },
}

/// Where the optional side outputs of a run go. None of these affect the numbers.
#[derive(Clone, Debug, Default)]
pub struct OutputOptions {
    pub dump_paths: Option<PathBuf>,
}

/// Result of a run: the report document, an optional table, and the exit status
/// (0 success, 2 validation failure, 3 numerical failure).
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Value,
    pub table: Option<Table>,
    pub status: i32,
}

/// Environment file: the canonical spec, or a bare ladder whose offsets are sampled
/// from `seed` (default 0).
#[derive(Deserialize)]
struct EnvFile {
    scales: Vec<ScaleParams>,
    #[serde(default)]
    offsets: Option<Vec<[i64; 2]>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    profile: Profile,
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_env(path: &Path) -> Result<EnvironmentSpec, CliError> {
    let text = read_to_string(path)?;
    let file: EnvFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(match file.offsets {
        Some(pairs) => EnvironmentSpec {
            scales: file.scales,
            offsets: pairs.into_iter().map(|[x, y]| Point::new(x, y)).collect(),
            seed: file.seed,
            profile: file.profile,
        },
        None => EnvironmentSpec::sample(file.scales, file.profile, file.seed),
    })
}

/// Read a config document, or the `config` member of an earlier report.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = read_to_string(path)?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serialises")
}

fn require_level(env: &EnvironmentSpec, level: u32) -> Result<&ScaleParams, CliError> {
    env.scale(level).map_err(CliError::from)
}

pub fn run(config: &ExperimentConfig, output: &OutputOptions) -> Result<Outcome, CliError> {
    let (result, table, status) = match config {
        ExperimentConfig::Validate { env, profile } => {
            let report = validate_scales(&env.scales, *profile);
            let mut t = Table::new(&["level", "condition", "verdict", "detail"]);
            for c in &report.conditions {
                t.push(vec![
                    c.level.into(),
                    c.condition.as_str().into(),
                    to_value(&c.verdict).as_str().unwrap_or_default().into(),
                    c.detail.as_str().into(),
                ]);
            }
            let status = if report.pass { 0 } else { 2 };
            (to_value(&report), Some(t), status)
        }
        ExperimentConfig::TuneK { env, level, options } => {
            require_level(env, *level)?;
            let environment = Environment::new(env.clone())?;
            let cache = KCache::from_env();
            let (result, hit) = cache.tune(&environment, *level, options)?;
            eprintln!(
                "tune-k: {} ({})",
                if hit { "cache hit" } else { "computed" },
                cache.path().display()
            );
            let mut t = Table::new(&["level", "k_tuned", "sigma_sq_at_k", "sigma_sq_at_zero", "iterations"]);
            t.push(vec![
                result.level.into(),
                result.k_tuned.into(),
                result.sigma_sq_at_k.into(),
                result.sigma_sq_at_zero.into(),
                result.iterations.into(),
            ]);
            (to_value(&result), Some(t), 0)
        }
        ExperimentConfig::Resistance { env, level, k, solver } => {
            require_level(env, *level)?;
            let environment = Environment::new(env.clone())?;
            let (weights, solution) = solve_level::<f64>(&environment, *level, *k, solver, None)?;
            let certificate = certify(&weights, &solution)?;
            let mut t = Table::new(&["level", "k", "sigma_sq", "iterations", "relative_residual", "gap"]);
            t.push(vec![
                (*level).into(),
                (*k).into(),
                solution.energy.into(),
                solution.iterations.into(),
                solution.relative_residual.into(),
                certificate.gap.into(),
            ]);
            let result = json!({
                "level": level,
                "k": k,
                "sigma_sq": solution.energy,
                "iterations": solution.iterations,
                "relative_residual": solution.relative_residual,
                "certificate": certificate,
            });
            (result, Some(t), if certificate.certified { 0 } else { 3 })
        }
        ExperimentConfig::Simulate {
            field,
            start,
            horizon,
            eps,
            paths,
            seed,
            event_cap,
        } => {
            let environment = match field {
                FieldConfig::Uniform => None,
                FieldConfig::Environment { env, level } => {
                    require_level(env, *level)?;
                    Some((Environment::new(env.clone())?, *level))
                }
            };
            let uniform = Uniform(1.0);
            let level_field;
            let conductances: &dyn Conductances = match &environment {
                None => &uniform,
                Some((env, level)) => {
                    level_field = LevelField { env, level: *level };
                    &level_field
                }
            };
            simulate(conductances, *start, *horizon, *eps, *paths, *seed, *event_cap, output)?
        }
        ExperimentConfig::CltStats {
            ensemble,
            library,
            eps,
            environments,
            paths,
            seed,
            reference,
        } => {
            let opts = AnnealedOptions {
                eps: *eps,
                environments: *environments,
                paths: *paths,
                seed: *seed,
                event_cap: DEFAULT_EVENT_CAP,
            };
            let reports = annealed_estimate(ensemble, library, &opts)?;
            let mut t = Table::new(&["functional", "env_seed", "mean", "stderr", "paths"]);
            let mut references = Vec::new();
            for (r, f) in reports.iter().zip(&library.functionals) {
                for e in &r.environments {
                    t.push(vec![
                        r.functional.as_str().into(),
                        e.env_seed.into(),
                        e.mean.into(),
                        e.stderr.into(),
                        e.paths.into(),
                    ]);
                }
                let bm = bm_reference(&f.spec, reference);
                let z = (r.pooled_mean - bm.value) / r.pooled_stderr.hypot(bm.stderr);
                references.push(json!({
                    "functional": f.id,
                    "reference": bm,
                    "pooled_mean": r.pooled_mean,
                    "pooled_stderr": r.pooled_stderr,
                    "z": z,
                }));
            }
            let result = json!({
                "library_version": library.version,
                "reports": reports,
                "comparison": references,
            });
            (result, Some(t), 0)
        }
        ExperimentConfig::Blocking { env, level, options } => {
            require_level(env, *level)?;
            let environment = Environment::new(env.clone())?;
            let report = obstacle_blocking_experiment(&environment, *level, options)?;
            let mut t = Table::new(&[
                "level",
                "eta",
                "k",
                "walk_hits",
                "walk_paths",
                "walk_p",
                "bm_p",
                "bm_stderr",
                "ratio",
            ]);
            t.push(vec![
                report.level.into(),
                report.eta.into(),
                report.k.into(),
                report.walk.hits.into(),
                report.walk.trials.into(),
                report.walk.estimate.into(),
                report.brownian.estimate.into(),
                report.brownian.stderr.into(),
                report.ratio.into(),
            ]);
            (to_value(&report), Some(t), 0)
        }
        ExperimentConfig::Hitting {
            scales,
            level,
            lambdas,
            samples,
            seed,
        } => {
            let reports = lambdas
                .iter()
                .map(|l| hitting_probability(scales, *level, *l, *samples, *seed))
                .collect::<Result<Vec<_>, _>>()?;
            let mut t = Table::new(&[
                "lambda",
                "exact_count",
                "grid_size",
                "exact",
                "hits",
                "samples",
                "mc",
                "deviation",
            ]);
            for r in &reports {
                t.push(vec![
                    r.lambda.into(),
                    r.exact_count.into(),
                    r.grid_size.into(),
                    r.exact.into(),
                    r.hits.into(),
                    r.samples.into(),
                    r.monte_carlo.estimate.into(),
                    r.deviation.into(),
                ]);
            }
            (to_value(&reports), Some(t), 0)
        }
        ExperimentConfig::ReversalCheck { chain } => {
            let report = reversal_identity_check(&chain.chain()?, &chain.functional)?;
            let mut t = Table::new(&["states", "self_adjoint", "lhs", "rhs", "residual"]);
            t.push(vec![
                report.states.into(),
                report.self_adjoint.into(),
                report.lhs.into(),
                report.rhs.into(),
                report.residual.into(),
            ]);
            (to_value(&report), Some(t), 0)
        }
        ExperimentConfig::EnvDump { env } => {
            Environment::new(env.clone())?;
            (to_value(env), None, 0)
        }
    };
    let report = match config {
        // the dump is the environment document itself, loadable with --env
        ExperimentConfig::EnvDump { .. } => result,
        _ => json!({ "config": config, "result": result }),
    };
    Ok(Outcome { report, table, status })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    field: &dyn Conductances,
    start: Point,
    horizon: f64,
    eps: Option<f64>,
    paths: usize,
    seed: u64,
    event_cap: u64,
    output: &OutputOptions,
) -> Result<(Value, Option<Table>, i32), CliError> {
    let raw = match eps {
        Some(e) => raw_horizon(e, horizon),
        None => horizon,
    };
    if let Some(dir) = &output.dump_paths {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut t = Table::new(&[
        "path",
        "jumps",
        "final_x",
        "final_y",
        "scaled_x",
        "scaled_y",
        "truncated",
    ]);
    let (mut jumps, mut square, mut truncated) = (0usize, 0.0f64, 0usize);
    for i in 0..paths {
        let path = simulate_or_truncate(field, start, raw, PathKey::new(seed, i as u64), event_cap)?;
        let end = path.at(raw) - start;
        let scaled = match eps {
            Some(e) if !path.truncated => diffusive_rescale(&path.centred(), e, horizon)?.at(horizon).coords(),
            _ => [end.x as f64, end.y as f64],
        };
        jumps += path.jumps();
        square += scaled[0] * scaled[0] + scaled[1] * scaled[1];
        truncated += usize::from(path.truncated);
        t.push(vec![
            i.into(),
            path.jumps().into(),
            (path.at(raw).x).into(),
            (path.at(raw).y).into(),
            scaled[0].into(),
            scaled[1].into(),
            path.truncated.into(),
        ]);
        if let Some(dir) = &output.dump_paths {
            let mut events = Table::new(&["t", "x", "y"]);
            for (time, p) in &path.events {
                events.push(vec![(*time).into(), p.x.into(), p.y.into()]);
            }
            let file = dir.join(format!("path_{i:06}.csv"));
            emit_csv(&events, &file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
        }
    }
    let n = paths.max(1) as f64;
    let result = json!({
        "raw_horizon": raw,
        "paths": paths,
        "truncated": truncated,
        "mean_jumps": jumps as f64 / n,
        "mean_square_displacement": square / n,
    });
    Ok((result, Some(t), if truncated > 0 { 3 } else { 0 }))
}

/// Pretty JSON with a trailing newline.
pub fn render(report: &Value) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serialises");
    text.push('\n');
    text
}

pub const DESK_LEVEL1: (u64, u64, u64) = (224, 8, 96);

/// Named ladders for `env-dump --preset`.
pub fn preset(name: &str) -> Result<Vec<ScaleParams>, CliError> {
    match name {
        "desk" => Ok(vec![ScaleParams::new(1, DESK_LEVEL1.0, DESK_LEVEL1.1, DESK_LEVEL1.2)]),
        "small" => Ok(vec![ScaleParams::new(1, 96, 4, 24)]),
        other => Err(CliError::Config(format!("unknown preset {other:?} (desk, small)"))),
    }
}
