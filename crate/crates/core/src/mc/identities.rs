//! Deterministic identity suite: interlacing, the minor formula for the
//! diagonal resolvent, its average over `k`, the Stieltjes gap between `H`
//! and its minors, and the count bound `N_I <= (5/4) N eta Im m`.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use super::experiments::{Report, RunStats};
use super::table::Table;
use super::{aux_rng, run_experiment, Accumulator, ExperimentConfig, Needs, Outcome, Reducer, Sample};
use crate::eigen::{eigh, interlacing_check};
use crate::ensemble::minor;
use crate::error::{EigenError, Result};
use crate::spectral::{
    basic_count_bound, minor_stieltjes_gap, resolvent_entry, resolvent_tolerance, resolvent_via_minor,
    shifted_lu, stieltjes, SpectralPoint,
};
use crate::Complex64;

/// Random `(E, eta)` pairs per sample for the count bound.
pub const RANDOM_COUNT_POINTS: usize = 20;

/// Tolerance for the averaged minor formula.
pub const AVERAGE_TOLERANCE: f64 = 1e-9;

pub const CHECKS: [&str; 5] = ["interlacing", "minor_formula", "minor_average", "minor_stieltjes_gap", "count_bound"];

/// Tally of one identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckStats {
    pub checks: u64,
    pub violations: u64,
    /// Largest `value / limit`; at most 1 when nothing is violated.
    pub worst_ratio: f64,
}

impl Default for CheckStats {
    fn default() -> Self {
        Self {
            checks: 0,
            violations: 0,
            worst_ratio: f64::NEG_INFINITY,
        }
    }
}

impl CheckStats {
    fn record(&mut self, pass: bool, ratio: f64) {
        self.checks += 1;
        if !pass {
            self.violations += 1;
        }
        if ratio > self.worst_ratio || ratio.is_nan() {
            self.worst_ratio = ratio;
        }
    }

    fn merge(&mut self, o: &Self) {
        self.checks += o.checks;
        self.violations += o.violations;
        if o.worst_ratio > self.worst_ratio || o.worst_ratio.is_nan() {
            self.worst_ratio = o.worst_ratio;
        }
    }
}

#[derive(Default)]
struct IdentityAcc([CheckStats; 5]);

impl Accumulator for IdentityAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.merge(b);
        }
    }
}

struct IdentityReducer {
    z: SpectralPoint,
    master_seed: u64,
    kappa: f64,
}

impl Reducer for IdentityReducer {
    type Acc = IdentityAcc;

    fn needs(&self) -> Needs {
        Needs::Matrix
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut IdentityAcc) -> Result<Outcome, EigenError> {
        let h = s.matrix();
        let n = h.n();
        let z = self.z;
        let h_dec = eigh(h, false)?;
        let lu = shifted_lu(h, z);
        let tol = resolvent_tolerance(z);
        let mut average = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let md = minor(h, k).expect("k < n");
            let m_dec = eigh(&md.b, true)?;
            let il = interlacing_check(&h_dec, &m_dec).expect("dimensions agree");
            acc.0[0].record(il.holds, il.max_violation / il.slack);

            let direct = resolvent_entry(&lu, n, k);
            let (via, _) = resolvent_via_minor(&md, &m_dec, z).map_err(|_| EigenError::Certification {
                what: "overlap completeness",
                value: f64::NAN,
                limit: 0.0,
            })?;
            let d = (direct - via).norm();
            acc.0[1].record(d <= tol, d / tol);
            average += via;

            let gap = minor_stieltjes_gap(&h_dec.eigenvalues, &m_dec.eigenvalues, z).expect("dimensions agree");
            acc.0[3].record(gap.pass, gap.gap / gap.bound);
        }
        let d = (average / n as f64 - stieltjes(&h_dec.eigenvalues, z)).norm();
        acc.0[2].record(d <= AVERAGE_TOLERANCE, d / AVERAGE_TOLERANCE);

        let mut rng = aux_rng(self.master_seed, s.index);
        let edge = 2.0 - self.kappa;
        let nf = n as f64;
        let points = std::iter::once((z.e(), z.eta())).chain((0..RANDOM_COUNT_POINTS).map(|_| {
            let e = rng.random_range(-edge..edge);
            // Log-uniform in [1/N, 1].
            let eta = (-(nf.ln()) * rng.random::<f64>()).exp();
            (e, eta)
        }));
        for (e, eta) in points {
            let b = basic_count_bound(&h_dec.eigenvalues, e, eta).expect("eta > 0");
            acc.0[4].record(b.pass, b.lhs as f64 / b.rhs.max(f64::MIN_POSITIVE));
        }
        Ok(Outcome::Used)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub n: usize,
    pub z: (f64, f64),
    pub checks: Vec<(&'static str, CheckStats)>,
    pub run: RunStats,
}

impl IdentityReport {
    pub fn total_violations(&self) -> u64 {
        self.checks.iter().map(|c| c.1.violations).sum()
    }
}

/// Runs every identity on each sample for all `k` at `z = E + i eta`.
pub fn identity_suite(config: &ExperimentConfig, eta: f64) -> Result<IdentityReport> {
    let z = SpectralPoint::new(config.energy, eta)?;
    if config.n < 2 {
        return Err(crate::Error::InvalidArgument("identity suite needs n >= 2".into()));
    }
    let run = run_experiment(
        config,
        &IdentityReducer {
            z,
            master_seed: config.master_seed,
            kappa: config.kappa,
        },
    )?;
    Ok(IdentityReport {
        n: config.n,
        z: (z.e(), z.eta()),
        checks: CHECKS.iter().copied().zip(run.acc.0).collect(),
        run: (&run).into(),
    })
}

impl Report for IdentityReport {
    fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("validate", &["check", "n_checks", "n_violations", "worst_ratio"]);
        for (name, c) in &self.checks {
            t.push(vec![(*name).into(), c.checks.into(), c.violations.into(), c.worst_ratio.into()]);
        }
        vec![t]
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "z": [self.z.0, self.z.1],
            "violations": self.total_violations(),
            "run": self.run,
        })
    }

    fn passed(&self) -> bool {
        self.total_violations() == 0 && self.run.failed == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{DiagonalFamily, EntryDistributionSpec, OffDiagonalFamily};

    #[test]
    fn small_suite_has_no_violations() {
        let cfg = ExperimentConfig {
            n: 16,
            n_samples: 5,
            master_seed: 3,
            energy: 0.3,
            ..Default::default()
        };
        let r = identity_suite(&cfg, 0.1).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checks[0].1.checks, 5 * 16);
        assert_eq!(r.checks[2].1.checks, 5);
        assert_eq!(r.checks[4].1.checks, 5 * (1 + RANDOM_COUNT_POINTS as u64));
    }

    #[test]
    fn holds_for_bounded_entries() {
        let cfg = ExperimentConfig {
            n: 12,
            n_samples: 4,
            master_seed: 4,
            spec: EntryDistributionSpec::new(OffDiagonalFamily::ProductUniform, DiagonalFamily::RealUniform),
            ..Default::default()
        };
        assert!(identity_suite(&cfg, 0.05).unwrap().passed());
    }
}
