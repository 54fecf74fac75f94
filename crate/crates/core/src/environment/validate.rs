//! Scale-ladder validation. Never fails: every problem becomes a violated verdict.

use serde::{Deserialize, Serialize};

use super::{Profile, ScaleParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Waived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub level: u32,
    pub condition: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub profile: Profile,
    pub pass: bool,
    pub conditions: Vec<ConditionReport>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &ConditionReport> {
        self.conditions.iter().filter(|c| c.verdict == Verdict::Violated)
    }

    pub fn verdict(&self, level: u32, condition: &str) -> Option<Verdict> {
        self.conditions
            .iter()
            .find(|c| c.level == level && c.condition == condition)
            .map(|c| c.verdict)
    }
}

/// Geometric feasibility of one level: the whole I footprint lies strictly inside the
/// square, so periodic copies never touch.
pub fn geometrically_feasible(a: u64, b: u64, beta: u64) -> bool {
    b > 0 && a >= 20 * b + 4 && beta + b < a / 2
}

struct Collector {
    profile: Profile,
    out: Vec<ConditionReport>,
}

impl Collector {
    fn check(&mut self, level: u32, condition: &str, ok: bool, detail: String) {
        self.out.push(ConditionReport {
            level,
            condition: condition.to_string(),
            verdict: if ok { Verdict::Satisfied } else { Verdict::Violated },
            detail,
        });
    }

    fn waive(&mut self, level: u32, condition: &str, detail: &str) {
        self.out.push(ConditionReport {
            level,
            condition: condition.to_string(),
            verdict: Verdict::Waived,
            detail: detail.to_string(),
        });
    }

    /// Asymptotic conditions are only evaluated under the strict profile.
    fn strict(&mut self, level: u32, condition: &str, ok: bool, detail: String) {
        match self.profile {
            Profile::Strict => self.check(level, condition, ok, detail),
            Profile::Desk => self.waive(level, condition, "asymptotic condition waived by desk profile"),
        }
    }
}

fn divides(d: u64, n: u64) -> bool {
    d != 0 && n.is_multiple_of(d)
}

pub fn validate_scales(scales: &[ScaleParams], profile: Profile) -> ValidationReport {
    let mut c = Collector {
        profile,
        out: Vec::new(),
    };
    if scales.is_empty() {
        c.check(0, "ladder", false, "no levels".into());
    }
    let mut a_prev: u64 = 1;
    for (i, s) in scales.iter().enumerate() {
        let n = s.level;
        let expected = i as u32 + 1;
        c.check(n, "levels", n == expected, format!("level {n} at position {expected}"));
        let (a, b, beta) = (s.a, s.b, s.beta);
        c.check(n, "(i)", a > 0 && a % 2 == 0, format!("a = {a}"));
        c.check(
            n,
            "(ii)",
            divides(a_prev, b) && divides(b, beta) && divides(b, a),
            format!("a_prev = {a_prev}, b = {b}, beta = {beta}, a = {a}"),
        );
        c.check(
            n,
            "ordering",
            a_prev < b && b < beta && beta < a,
            format!("{a_prev} < {b} < {beta} < {a}"),
        );
        c.check(
            n,
            "geometry",
            geometrically_feasible(a, b, beta),
            format!(
                "20b+4 = {} <= a = {a}; beta+b+1 = {} <= a/2 = {}",
                20 * b + 4,
                beta + b + 1,
                a / 2
            ),
        );
        let positive =
            s.eta.is_none_or(|e| e.is_finite() && e > 0.0) && s.k_tuned.is_none_or(|k| k.is_finite() && k > 0.0);
        c.check(
            n,
            "positivity",
            positive,
            format!("eta = {:?}, k = {:?}", s.eta, s.k_tuned),
        );

        let nf = n.max(1) as f64;
        let (af, bf, betaf) = (a as f64, b as f64, beta as f64);
        if n == 1 {
            c.strict(n, "(iii)", bf >= 1e10, format!("b_1 = {b}"));
        }
        c.strict(
            n,
            "(iv)",
            af / (2.0 * nf).sqrt() <= bf && bf <= af / nf.sqrt(),
            format!("{:.3} <= {b} <= {:.3}", af / (2.0 * nf).sqrt(), af / nf.sqrt()),
        );
        if let Some(next) = scales.get(i + 1) {
            let factor = 2f64.powi(n as i32);
            c.strict(
                n,
                "(v)",
                next.b as f64 >= factor * bf,
                format!("b_{} = {} >= 2^{n} b_{n} = {}", n + 1, next.b, factor * bf),
            );
        }
        c.strict(
            n,
            "(vi)",
            b > 40 * a_prev,
            format!("b = {b} > 40 a_prev = {}", 40 * a_prev),
        );
        c.waive(n, "(vii)", "depends on non-computable proof constants");
        let root = nf.powf(0.25);
        if root > 100.0 {
            c.strict(
                n,
                "(viii)",
                100.0 * bf < betaf && betaf <= bf * root && bf * root < 3.0 * betaf && 3.0 * betaf < af / 10.0,
                format!("100b < beta <= b n^(1/4) < 3 beta < a/10 with n^(1/4) = {root:.3}"),
            );
        } else {
            c.waive(n, "(viii)", "only required for n large enough (n^(1/4) > 100)");
        }
        a_prev = a.max(1);
    }
    let pass = c.out.iter().all(|r| r.verdict != Verdict::Violated);
    ValidationReport {
        profile,
        pass,
        conditions: c.out,
    }
}
