//! Estimators: binomial tail probabilities with exact intervals, moment
//! means with normal intervals, and weighted log-log power-law fits.

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A point estimate with a 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: u64,
    pub n_events: u64,
}

impl EstimateWithCI {
    pub fn overlaps(&self, other: &EstimateWithCI) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Quantile of the Beta(a, b) law by bisection on the regularized incomplete
/// beta function.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Proportion `n_events / n` with the exact (Clopper-Pearson) 95% interval.
pub fn tail_probability(n_events: u64, n: u64) -> EstimateWithCI {
    assert!(n_events <= n, "more events than trials");
    if n == 0 {
        return EstimateWithCI {
            point: 0.0,
            lo: 0.0,
            hi: 1.0,
            n,
            n_events,
        };
    }
    let (k, nf) = (n_events as f64, n as f64);
    let alpha = 0.05;
    let lo = if n_events == 0 {
        0.0
    } else {
        beta_quantile(k, nf - k + 1.0, alpha / 2.0)
    };
    let hi = if n_events == n {
        1.0
    } else {
        beta_quantile(k + 1.0, nf - k, 1.0 - alpha / 2.0)
    };
    let point = k / nf;
    EstimateWithCI {
        point,
        lo: lo.min(point),
        hi: hi.max(point),
        n,
        n_events,
    }
}

/// Running sums for the mean of a real statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    pub n: u64,
    pub nonzero: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        if x != 0.0 {
            self.nonzero += 1;
        }
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.nonzero += other.nonzero;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Mean with a normal-approximation 95% interval; `n_events` counts the
    /// nonzero observations.
    pub fn estimate(&self) -> EstimateWithCI {
        let m = self.mean();
        let h = Z95 * self.stderr();
        EstimateWithCI {
            point: m,
            lo: m - h,
            hi: m + h,
            n: self.n,
            n_events: self.nonzero,
        }
    }
}

/// Weighted least-squares line through `(log x, log p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    pub bins_used: usize,
}

/// One bin of a tail-probability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBin {
    pub x: f64,
    pub n_events: u64,
    pub n: u64,
}

/// Fits `log p = intercept + slope log x` over bins with at least
/// `min_events` events by iteratively reweighted least squares. Each bin is
/// weighted by the inverse delta-method variance of `log p`,
/// `n p / (1 - p)`, evaluated at the fitted `p` (the observed `p` seeds the
/// first pass). The slope error assumes those variances are exact.
pub fn fit_power_law(bins: &[TailBin], min_events: u64) -> Result<ExponentFit> {
    let used: Vec<(f64, f64, f64)> = bins
        .iter()
        .filter(|b| b.n_events >= min_events.max(1) && b.n > 0 && b.x > 0.0)
        .map(|b| (b.x.ln(), (b.n_events as f64 / b.n as f64).ln(), b.n as f64))
        .collect();
    if used.len() < 3 {
        return Err(Error::FitRefused(format!(
            "{} of {} bins have at least {min_events} events; need 3",
            used.len(),
            bins.len()
        )));
    }
    let weight = |n: f64, log_p: f64| {
        let p = log_p.exp().min(1.0 - 1.0 / n);
        n * p / (1.0 - p)
    };
    let mut w: Vec<f64> = used.iter().map(|u| weight(u.2, u.1)).collect();
    let mut fit = weighted_line(&used, &w)?;
    for _ in 0..4 {
        w = used
            .iter()
            .map(|u| weight(u.2, fit.intercept + fit.slope * u.0))
            .collect();
        fit = weighted_line(&used, &w)?;
    }
    Ok(fit)
}

fn weighted_line(pts: &[(f64, f64, f64)], w: &[f64]) -> Result<ExponentFit> {
    let sw: f64 = w.iter().sum();
    let xbar = pts.iter().zip(w).map(|(u, w)| w * u.0).sum::<f64>() / sw;
    let ybar = pts.iter().zip(w).map(|(u, w)| w * u.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(w).map(|(u, w)| w * (u.0 - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitRefused("all usable bins share one abscissa".into()));
    }
    let sxy: f64 = pts.iter().zip(w).map(|(u, w)| w * (u.0 - xbar) * (u.1 - ybar)).sum();
    let syy: f64 = pts.iter().zip(w).map(|(u, w)| w * (u.1 - ybar).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = pts
        .iter()
        .zip(w)
        .map(|(u, w)| w * (u.1 - intercept - slope * u.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ExponentFit {
        slope,
        intercept,
        slope_stderr: (1.0 / sxx).sqrt(),
        r2,
        bins_used: pts.len(),
    })
}
