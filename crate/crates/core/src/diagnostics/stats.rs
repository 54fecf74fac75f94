//! Small, order-independent summary statistics and the 99% intervals used by the
//! experiments.

use serde::{Deserialize, Serialize};

use crate::scalar::accurate_sum;

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Sample mean and standard error of the mean (zero for fewer than two values).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = accurate_sum(values.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = accurate_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n as f64 - 1.0) / n as f64).sqrt())
}

/// A proportion with its 99% Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    pub fn new(hits: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p = hits as f64 / n;
        let z2 = Z99 * Z99;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = Z99 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Self {
            hits,
            trials,
            estimate: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            lower: (centre - half).max(0.0),
            upper: (centre + half).min(1.0),
        }
    }
}

/// A mean with its 99% normal interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub stderr: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(estimate: f64, stderr: f64) -> Self {
        Self {
            estimate,
            stderr,
            lower: estimate - Z99 * stderr,
            upper: estimate + Z99 * stderr,
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        let (m, s) = mean_stderr(values);
        Self::new(m, s)
    }
}

/// `|a − b| / sqrt(se_a² + se_b²)`, zero when the estimates coincide.
pub fn separation(a: (f64, f64), b: (f64, f64)) -> f64 {
    let diff = (a.0 - b.0).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.1.hypot(b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn wilson_interval_covers_zero_counts() {
        let p = Proportion::new(0, 1000);
        assert_eq!(p.lower, 0.0);
        assert!(p.upper > 0.0 && p.upper < 0.01);
        let q = Proportion::new(500, 1000);
        assert!((q.lower + q.upper - 1.0).abs() < 1e-12);
        assert!(q.lower < 0.5 - 2.5 * q.stderr && q.upper > 0.5 + 2.5 * q.stderr);
    }

    #[test]
    fn separation_in_stderr_units() {
        assert_eq!(separation((1.0, 0.0), (1.0, 0.0)), 0.0);
        assert_eq!(separation((1.0, 3.0), (6.0, 4.0)), 1.0);
    }
}
