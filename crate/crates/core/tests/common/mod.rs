//! Independent oracles shared by integration tests.

use num_complex::Complex64;
use wigner_lab::ensemble::HermitianMatrix;

/// Number of eigenvalues below `x`: negative pivots of `H - x` in an
/// unpivoted LDL^H factorization (Sylvester inertia).
pub fn count_below(h: &HermitianMatrix, x: f64) -> usize {
    let n = h.n();
    let mut a: Vec<Complex64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            h.get(i, j) - if i == j { x } else { 0.0 }
        })
        .collect();
    let mut negatives = 0;
    for k in 0..n {
        let mut p = a[k * n + k].re;
        if p == 0.0 {
            p = -f64::MIN_POSITIVE;
        }
        if p < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let f = a[i * n + k] / p;
            for j in k + 1..n {
                let t = a[k * n + j];
                a[i * n + j] -= f * t;
            }
        }
    }
    negatives
}

/// Eigenvalues by bisection on the inertia count.
pub fn bisection_spectrum(h: &HermitianMatrix) -> Vec<f64> {
    let r: f64 = (0..h.n())
        .map(|i| h.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    (0..h.n())
        .map(|k| {
            let (mut lo, mut hi) = (-r, r);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if count_below(h, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}
