use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use condlab::diagnostics::{BlockingOptions, ChainDocument, Ensemble, FunctionalLibrary, ReferenceOptions};
use condlab::walk::DEFAULT_EVENT_CAP;
use condlab::{EnvironmentSpec, Point, Profile, SolverOptions, TuneOptions};
use condlab_cli::{
    emit_csv, load_config, load_env, preset, read_to_string, render, run, CliError, ExperimentConfig, FieldConfig,
    OutputOptions,
};

#[derive(Parser, Debug)]
#[command(
    name = "condlab",
    version,
    about = "Hierarchical conductance environments and random walk diagnostics"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write the tabular view of the report as CSV.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct EnvArg {
    /// Environment JSON (scales, optional offsets, seed and profile).
    #[arg(long)]
    env: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a scale ladder against the structural conditions.
    Validate {
        #[command(flatten)]
        env: EnvArg,
        /// Override the profile stored in the environment file.
        #[arg(long)]
        profile: Option<Profile>,
    },
    /// Tune the high conductance of one level so that σ² = 1.
    TuneK {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        level: u32,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Write the environment with the tuned value filled in.
        #[arg(long)]
        env_out: Option<PathBuf>,
    },
    /// Effective conductance of one level at a given K, with its duality certificate.
    Resistance {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        level: u32,
        #[arg(long = "K")]
        k: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Simulate walk paths in an environment or on the uniform lattice.
    Simulate {
        #[arg(long, conflicts_with = "env", required_unless_present = "env")]
        uniform: bool,
        #[arg(long, requires = "level")]
        env: Option<PathBuf>,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, value_parser = parse_point, default_value = "0,0")]
        start: Point,
        /// Horizon; macroscopic when --eps is given, raw walk time otherwise.
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for one `t,x,y` CSV file per path.
        #[arg(long)]
        dump_paths: Option<PathBuf>,
    },
    /// Annealed estimates of the functional library against the Brownian reference.
    CltStats {
        #[arg(long, conflicts_with = "env", required_unless_present = "env")]
        uniform: bool,
        /// Ladder whose offsets are resampled per environment.
        #[arg(long)]
        env: Option<PathBuf>,
        /// Functional library JSON (default: the built-in library).
        #[arg(long)]
        functionals: Option<PathBuf>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 20)]
        envs: usize,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Walk versus Brownian probability of crossing the lowest obstacle.
    Blocking {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        level: u32,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        #[arg(long, default_value_t = 20_000)]
        bm_paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Probability that a uniform point lies in the hitting set of an obstacle.
    Hitting {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        level: u32,
        #[arg(long, value_delimiter = ',', default_value = "0.125,0.25")]
        lambda: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact check of the time-reversal identity on a small chain.
    ReversalCheck {
        /// JSON with `rates`, `times` and `factors`.
        #[arg(long)]
        chain: PathBuf,
    },
    /// Print the canonical environment document.
    EnvDump {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        env: Option<PathBuf>,
        /// Built-in ladder: desk or small.
        #[arg(long)]
        preset: Option<String>,
        /// Offset seed used with --preset.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        profile: Option<Profile>,
    },
    /// Repeat the run recorded in a report (or a bare config document).
    Rerun {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Point::new(x, y))
}

fn config_error(e: serde_json::Error, path: &Path) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn build_config(command: Command) -> Result<(ExperimentConfig, OutputOptions), CliError> {
    let mut output = OutputOptions::default();
    let config = match command {
        Command::Validate { env, profile } => {
            let env = load_env(&env.env)?;
            let profile = profile.unwrap_or(env.profile);
            ExperimentConfig::Validate { env, profile }
        }
        Command::TuneK { env, level, tol, .. } => ExperimentConfig::TuneK {
            env: load_env(&env.env)?,
            level,
            options: TuneOptions {
                tol,
                ..TuneOptions::default()
            },
        },
        Command::Resistance { env, level, k, tol } => ExperimentConfig::Resistance {
            env: load_env(&env.env)?,
            level,
            k,
            solver: SolverOptions {
                residual_tol: tol,
                ..SolverOptions::default()
            },
        },
        Command::Simulate {
            env,
            level,
            start,
            horizon,
            eps,
            paths,
            seed,
            dump_paths,
            ..
        } => {
            output.dump_paths = dump_paths;
            let field = match env {
                Some(path) => FieldConfig::Environment {
                    env: load_env(&path)?,
                    level: level.expect("clap enforces --level"),
                },
                None => FieldConfig::Uniform,
            };
            ExperimentConfig::Simulate {
                field,
                start,
                horizon,
                eps,
                paths,
                seed,
                event_cap: DEFAULT_EVENT_CAP,
            }
        }
        Command::CltStats {
            env,
            functionals,
            eps,
            envs,
            paths,
            seed,
            ..
        } => {
            let ensemble = match env {
                Some(path) => {
                    let spec = load_env(&path)?;
                    Ensemble::Sampled {
                        scales: spec.scales,
                        profile: spec.profile,
                    }
                }
                None => Ensemble::Uniform,
            };
            let library = match functionals {
                Some(path) => serde_json::from_str::<FunctionalLibrary>(&read_to_string(&path)?)
                    .map_err(|e| config_error(e, &path))?,
                None => FunctionalLibrary::standard(),
            };
            ExperimentConfig::CltStats {
                ensemble,
                library,
                eps,
                environments: envs,
                paths,
                seed,
                reference: ReferenceOptions::default(),
            }
        }
        Command::Blocking {
            env,
            level,
            eta,
            k,
            paths,
            bm_paths,
            seed,
        } => ExperimentConfig::Blocking {
            env: load_env(&env.env)?,
            level,
            options: BlockingOptions {
                eta,
                k,
                paths,
                bm_paths,
                seed,
                ..BlockingOptions::default()
            },
        },
        Command::Hitting {
            env,
            level,
            lambda,
            samples,
            seed,
        } => ExperimentConfig::Hitting {
            scales: load_env(&env.env)?.scales,
            level,
            lambdas: lambda,
            samples,
            seed,
        },
        Command::ReversalCheck { chain } => ExperimentConfig::ReversalCheck {
            chain: serde_json::from_str::<ChainDocument>(&read_to_string(&chain)?)
                .map_err(|e| config_error(e, &chain))?,
        },
        Command::EnvDump {
            env,
            preset: name,
            seed,
            profile,
        } => {
            let mut spec = match (env, name) {
                (Some(path), _) => load_env(&path)?,
                (None, Some(name)) => EnvironmentSpec::sample(preset(&name)?, Profile::default(), seed),
                (None, None) => unreachable!("clap requires --env or --preset"),
            };
            if let Some(p) = profile {
                spec.profile = p;
            }
            ExperimentConfig::EnvDump { env: spec }
        }
        Command::Rerun { config } => load_config(&config)?,
    };
    Ok((config, output))
}

fn write_env_out(
    config: &ExperimentConfig,
    report: &serde_json::Value,
    path: &Path,
    source: &Path,
) -> Result<(), CliError> {
    let same = match (path.canonicalize(), source.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => path == source,
    };
    if same {
        return Err(CliError::Config("--env-out must differ from --env".into()));
    }
    let ExperimentConfig::TuneK { env, level, .. } = config else {
        return Ok(());
    };
    let k = report["result"]["k_tuned"]
        .as_f64()
        .ok_or_else(|| CliError::Numerical("report has no tuned K".into()))?;
    let mut spec = env.clone();
    spec.scale_mut(*level)?.k_tuned = Some(k);
    std::fs::write(path, spec.to_json() + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let env_out = match &cli.command {
        Command::TuneK {
            env,
            env_out: Some(out),
            ..
        } => Some((out.clone(), env.env.clone())),
        _ => None,
    };
    if let Some((out, source)) = &env_out {
        if out == source {
            return Err(CliError::Config("--env-out must differ from --env".into()));
        }
    }
    let (config, output) = build_config(cli.command)?;
    let outcome = run(&config, &output)?;
    let text = render(&outcome.report);
    match &cli.out {
        Some(path) => std::fs::write(path, &text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    if let (Some(path), Some(table)) = (&cli.csv, &outcome.table) {
        emit_csv(table, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if let Some((out, source)) = env_out {
        if outcome.status == 0 {
            write_env_out(&config, &outcome.report, &out, &source)?;
        }
    }
    Ok(outcome.status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("condlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
