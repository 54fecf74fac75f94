//! Tuning of `K_n` so that `σ_n²(K_n) = 1`, with an on-disk cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{Environment, ScaleParams};

use super::potential::{PotentialField, SolverOptions};
use super::{solve_level, ResistanceError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Stop when `|σ²(K) − 1| ≤ tol`.
    pub tol: f64,
    pub solver: SolverOptions,
    /// Number of times the upper end of the bracket may double.
    pub max_doublings: u32,
    pub max_iterations: u32,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            solver: SolverOptions::default(),
            max_doublings: 20,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub level: u32,
    pub k_tuned: f64,
    pub sigma_sq_at_k: f64,
    pub sigma_sq_at_zero: f64,
    pub iterations: u32,
    /// Final bracket `(low, high)` around `k_tuned`.
    pub bracket: (f64, f64),
    /// Upper end of the bracket had to grow beyond `50 b_n`.
    pub bound_exceeded: bool,
}

/// Find `K` with `|σ²(K) − 1| ≤ tol` by safeguarded regula falsi (Illinois variant) on the
/// bracket `[0, 50 b_n]`, doubling the upper end when `σ²` has not yet crossed 1.
pub fn tune_k(env: &Environment, level: u32, opts: &TuneOptions) -> Result<TuneResult, ResistanceError> {
    let b = env.spec().scale(level)?.b as f64;
    let mut warm: Vec<(f64, PotentialField<f64>)> = Vec::new();
    let sigma = |k: f64, warm: &mut Vec<(f64, PotentialField<f64>)>| -> Result<f64, ResistanceError> {
        let start = warm
            .iter()
            .min_by(|x, y| (x.0 - k).abs().total_cmp(&(y.0 - k).abs()))
            .map(|(_, f)| f.clone());
        let (_, s) = solve_level::<f64>(env, level, k, &opts.solver, start.as_ref())?;
        warm.push((k, s.potential));
        if warm.len() > 2 {
            warm.remove(0);
        }
        Ok(s.energy)
    };

    let at_zero = sigma(0.0, &mut warm)?;
    if at_zero >= 1.0 {
        return Err(ResistanceError::NoDropAtZero { sigma_sq: at_zero });
    }
    let (mut lo, mut g_lo) = (0.0, at_zero - 1.0);
    let mut hi = 50.0 * b;
    let mut g_hi = sigma(hi, &mut warm)? - 1.0;
    let mut doublings = 0;
    while g_hi <= 0.0 {
        if doublings == opts.max_doublings {
            return Err(ResistanceError::BracketFailure {
                k_hi: hi,
                sigma_sq: g_hi + 1.0,
            });
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = sigma(hi, &mut warm)? - 1.0;
        doublings += 1;
    }
    if g_hi.abs() <= opts.tol {
        return Ok(TuneResult {
            level,
            k_tuned: hi,
            sigma_sq_at_k: g_hi + 1.0,
            sigma_sq_at_zero: at_zero,
            iterations: 0,
            bracket: (lo, hi),
            bound_exceeded: doublings > 0,
        });
    }

    let mut side = 0i8;
    for iteration in 1..=opts.max_iterations {
        let width = hi - lo;
        let mut k = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(k > lo + 1e-3 * width && k < hi - 1e-3 * width) {
            k = 0.5 * (lo + hi);
        }
        let g = sigma(k, &mut warm)? - 1.0;
        if g.abs() <= opts.tol {
            return Ok(TuneResult {
                level,
                k_tuned: k,
                sigma_sq_at_k: g + 1.0,
                sigma_sq_at_zero: at_zero,
                iterations: iteration,
                bracket: (lo, hi),
                bound_exceeded: doublings > 0,
            });
        }
        if g < 0.0 {
            lo = k;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = k;
            g_hi = g;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    Err(ResistanceError::SolverDiverged {
        iterations: opts.max_iterations as usize,
        relative_residual: g_lo.abs().min(g_hi.abs()),
    })
}

/// JSON file mapping a content hash of the tuning problem to its result.
#[derive(Clone, Debug)]
pub struct KCache {
    path: PathBuf,
}

static CACHE_LOCK: Mutex<()> = Mutex::new(());

#[derive(Serialize)]
struct CacheKey<'a> {
    scales: Vec<ScaleParams>,
    level: u32,
    options: &'a TuneOptions,
}

impl KCache {
    pub const FILE_NAME: &'static str = "k_cache.json";

    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        Self {
            path: dir.as_ref().join(Self::FILE_NAME),
        }
    }

    /// Directory from `CONDLAB_CACHE`, else `condlab-cache` under the system temp dir.
    pub fn from_env() -> Self {
        let dir = std::env::var_os("CONDLAB_CACHE")
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("condlab-cache"));
        Self::in_dir(dir)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn key(env: &Environment, level: u32, options: &TuneOptions) -> String {
        let mut scales: Vec<ScaleParams> = env.spec().scales.iter().take(level as usize).cloned().collect();
        if let Some(top) = scales.last_mut() {
            top.k_tuned = None;
        }
        let text = serde_json::to_string(&CacheKey { scales, level, options }).expect("cache key serialises");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|byte| format!("{byte:02x}"))
            .collect()
    }

    fn load(&self) -> Result<BTreeMap<String, TuneResult>, ResistanceError> {
        match std::fs::read_to_string(&self.path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| ResistanceError::Cache(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(ResistanceError::Cache(e.to_string())),
        }
    }

    pub fn get(&self, key: &str) -> Result<Option<TuneResult>, ResistanceError> {
        let _guard = CACHE_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        Ok(self.load()?.remove(key))
    }

    pub fn put(&self, key: &str, result: &TuneResult) -> Result<(), ResistanceError> {
        let _guard = CACHE_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        let mut map = self.load()?;
        map.insert(key.to_string(), result.clone());
        let io = |e: std::io::Error| ResistanceError::Cache(e.to_string());
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = self.path.with_extension(format!("json.{}.tmp", std::process::id()));
        std::fs::write(&tmp, serde_json::to_string_pretty(&map).expect("cache serialises")).map_err(io)?;
        std::fs::rename(&tmp, &self.path).map_err(io)
    }

    /// Cached result, or tune and store. The flag reports a cache hit.
    pub fn tune(
        &self,
        env: &Environment,
        level: u32,
        opts: &TuneOptions,
    ) -> Result<(TuneResult, bool), ResistanceError> {
        let key = Self::key(env, level, opts);
        if let Some(hit) = self.get(&key)? {
            return Ok((hit, true));
        }
        let result = tune_k(env, level, opts)?;
        self.put(&key, &result)?;
        Ok((result, false))
    }
}
