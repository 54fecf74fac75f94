//! Exact check of the time-reversal identity `⟨P F, P F⟩ = ⟨P F̂, f_m⟩` on small
//! continuous-time chains with counting reference measure.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::walk::reversed_schedule;

use super::DiagnosticsError;

pub const MAX_CHAIN_STATES: usize = 64;

/// Chain on `{0, …, n−1}` jumping from `x` to `y` at rate `rates[(x, y)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteChain {
    rates: DMatrix<f64>,
}

impl FiniteChain {
    /// Chain with symmetric conductances (self-adjoint for the counting measure).
    pub fn symmetric(conductances: DMatrix<f64>) -> Result<Self, DiagnosticsError> {
        let chain = Self::with_rates(conductances)?;
        if !chain.is_self_adjoint() {
            return Err(DiagnosticsError::Config("conductance matrix is not symmetric".into()));
        }
        Ok(chain)
    }

    /// Arbitrary non-negative jump rates; the diagonal is ignored.
    pub fn with_rates(mut rates: DMatrix<f64>) -> Result<Self, DiagnosticsError> {
        let n = rates.nrows();
        if n == 0 || n != rates.ncols() || n > MAX_CHAIN_STATES {
            return Err(DiagnosticsError::Config(format!(
                "chain needs a square rate matrix with 1..={MAX_CHAIN_STATES} states"
            )));
        }
        rates.fill_diagonal(0.0);
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(DiagnosticsError::Config("rates must be finite and non-negative".into()));
        }
        if n > 1 && rates.row_iter().any(|row| row.sum() <= 0.0) {
            return Err(DiagnosticsError::Config(
                "every state needs a positive total rate".into(),
            ));
        }
        Ok(Self { rates })
    }

    /// Nearest-neighbour ring; `rates[i]` is the conductance between `i` and `i + 1`.
    pub fn ring(conductances: &[f64]) -> Result<Self, DiagnosticsError> {
        let n = conductances.len();
        let mut c = DMatrix::zeros(n, n);
        for (i, &r) in conductances.iter().enumerate() {
            let j = (i + 1) % n;
            c[(i, j)] += r;
            c[(j, i)] += r;
        }
        Self::symmetric(c)
    }

    pub fn states(&self) -> usize {
        self.rates.nrows()
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.rates == self.rates.transpose()
    }

    pub fn generator(&self) -> DMatrix<f64> {
        let mut q = self.rates.clone();
        for i in 0..q.nrows() {
            q[(i, i)] = -self.rates.row(i).sum();
        }
        q
    }
}

/// Semigroup `P_t = e^{tQ}` for every requested time, using one eigendecomposition when
/// the generator is symmetric.
struct Semigroup {
    eigen: Option<SymmetricEigen<f64, nalgebra::Dyn>>,
    generator: DMatrix<f64>,
}

impl Semigroup {
    fn new(chain: &FiniteChain) -> Self {
        let generator = chain.generator();
        let eigen = chain.is_self_adjoint().then(|| SymmetricEigen::new(generator.clone()));
        Self { eigen, generator }
    }

    fn at(&self, t: f64) -> DMatrix<f64> {
        match &self.eigen {
            Some(e) => {
                let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| (l * t).exp()));
                &e.eigenvectors * d * e.eigenvectors.transpose()
            }
            None => (&self.generator * t).exp(),
        }
    }
}

/// Times and per-state factor vectors of a cylinder functional on the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainFunctional {
    pub times: Vec<f64>,
    pub factors: Vec<Vec<f64>>,
}

impl ChainFunctional {
    fn check(&self, states: usize) -> Result<(), DiagnosticsError> {
        if self.times.is_empty() || self.times.len() != self.factors.len() {
            return Err(DiagnosticsError::Config(
                "one factor per time, at least one time".into(),
            ));
        }
        if self.times[0] < 0.0 || self.times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(DiagnosticsError::Config(
                "times must be non-negative and non-decreasing".into(),
            ));
        }
        if self.factors.iter().any(|f| f.len() != states) {
            return Err(DiagnosticsError::Config(format!("factors must have {states} entries")));
        }
        Ok(())
    }
}

/// `x ↦ E^x ∏_k f_{i_k}(X_{s_k})` for the schedule `(s_k, i_k)`.
fn expectation(semigroup: &Semigroup, schedule: &[(f64, usize)], factors: &[DVector<f64>]) -> DVector<f64> {
    let (mut t, idx) = *schedule.last().expect("non-empty schedule");
    let mut v = factors[idx].clone();
    for &(s, i) in schedule[..schedule.len() - 1].iter().rev() {
        v = semigroup.at(t - s) * v;
        v.component_mul_assign(&factors[i]);
        t = s;
    }
    semigroup.at(t) * v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReversalReport {
    pub states: usize,
    pub self_adjoint: bool,
    /// `⟨P F, P F⟩`.
    pub lhs: f64,
    /// `⟨P F̂, f_m⟩`.
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of the reversal identity by dense matrix exponentials.
pub fn reversal_identity_check(
    chain: &FiniteChain,
    functional: &ChainFunctional,
) -> Result<ReversalReport, DiagnosticsError> {
    functional.check(chain.states())?;
    let semigroup = Semigroup::new(chain);
    let factors: Vec<DVector<f64>> = functional
        .factors
        .iter()
        .map(|f| DVector::from_column_slice(f))
        .collect();
    let forward: Vec<(f64, usize)> = functional.times.iter().copied().zip(0..).collect();
    let pf = expectation(&semigroup, &forward, &factors);
    let pfhat = expectation(&semigroup, &reversed_schedule(&functional.times), &factors);
    let lhs = pf.dot(&pf);
    let rhs = pfhat.dot(factors.last().expect("non-empty"));
    Ok(ReversalReport {
        states: chain.states(),
        self_adjoint: chain.is_self_adjoint(),
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// JSON form of a reversal check: `{ "rates": [[…]], "times": […], "factors": [[…]] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDocument {
    pub rates: Vec<Vec<f64>>,
    #[serde(flatten)]
    pub functional: ChainFunctional,
}

impl ChainDocument {
    pub fn chain(&self) -> Result<FiniteChain, DiagnosticsError> {
        let n = self.rates.len();
        if self.rates.iter().any(|r| r.len() != n) {
            return Err(DiagnosticsError::Config("rate matrix must be square".into()));
        }
        FiniteChain::with_rates(DMatrix::from_fn(n, n, |i, j| self.rates[i][j]))
    }
}
