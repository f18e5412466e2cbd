//! Spectral functionals: counting functions, Stieltjes transforms, the
//! semicircle law and the resolvent identities relating `H` to its minors.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::{eigh, SpectralDecomposition};
use crate::ensemble::{minor, HermitianMatrix, MinorDecomposition};
use crate::error::{Error, Result};
use crate::linalg::{dotc, CMatrix, Lu};

/// `z = E + i eta` with `eta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPoint {
    e: f64,
    eta: f64,
}

impl SpectralPoint {
    pub fn new(e: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() || !e.is_finite() {
            return Err(Error::NonPositiveEta(eta));
        }
        Ok(Self { e, eta })
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }
}

/// Closed interval `[center - width/2, center + width/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralInterval {
    center: f64,
    width: f64,
}

impl SpectralInterval {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !center.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "interval width must be positive, got {width}"
            )));
        }
        Ok(Self { center, width })
    }

    /// `[E - eta/2, E + eta/2]` for `z = E + i eta`.
    pub fn around(point: SpectralPoint) -> Self {
        Self {
            center: point.e,
            width: point.eta,
        }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn lo(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn hi(&self) -> f64 {
        self.center + 0.5 * self.width
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo() <= x && x <= self.hi()
    }
}

/// Overlaps `xi_alpha = |sqrt(n) a . u_alpha|^2` of the removed column with
/// the minor's eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapVector {
    pub xi: Vec<f64>,
    /// Dimension of the original matrix.
    pub n: usize,
}

/// `F(E) = #{alpha : mu_alpha <= E} / N` for ascending eigenvalues.
pub fn empirical_cdf(eigenvalues: &[f64], e: f64) -> f64 {
    if eigenvalues.is_empty() {
        return 0.0;
    }
    eigenvalues.partition_point(|&x| x <= e) as f64 / eigenvalues.len() as f64
}

/// `m(z) = (1/N) sum_alpha 1 / (mu_alpha - z)`.
pub fn stieltjes(eigenvalues: &[f64], z: SpectralPoint) -> Complex64 {
    let zz = z.z();
    let sum: Complex64 = eigenvalues.iter().map(|&mu| 1.0 / (mu - zz)).sum();
    sum / eigenvalues.len() as f64
}

/// Density of states smoothed at scale `eta`: `Im m(z) / pi`.
pub fn rho_eta(eigenvalues: &[f64], point: SpectralPoint) -> f64 {
    stieltjes(eigenvalues, point).im / PI
}

/// `rho_sc(E) = sqrt(4 - E^2) / (2 pi)` on `[-2, 2]`.
pub fn semicircle_density(e: f64) -> f64 {
    if e.abs() <= 2.0 {
        (4.0 - e * e).sqrt() / (2.0 * PI)
    } else {
        0.0
    }
}

/// Stieltjes transform of the semicircle law: the root of
/// `m^2 + z m + 1 = 0` with positive imaginary part.
pub fn m_sc(point: SpectralPoint) -> Complex64 {
    let z = point.z();
    let s = (z * z - 4.0).sqrt();
    // Larger-magnitude root first; the other is its reciprocal.
    let big = if (-z + s).norm() >= (-z - s).norm() {
        (-z + s) / 2.0
    } else {
        (-z - s) / 2.0
    };
    let small = 1.0 / big;
    if big.im > 0.0 {
        big
    } else {
        small
    }
}

/// `|m + 1/(m + z)|`.
pub fn self_consistency_residual(m: Complex64, z: SpectralPoint) -> f64 {
    (m + 1.0 / (m + z.z())).norm()
}

/// Number of eigenvalues in the closed interval.
pub fn count_in_interval(eigenvalues: &[f64], interval: SpectralInterval) -> usize {
    let hi = eigenvalues.partition_point(|&x| x <= interval.hi());
    let lo = eigenvalues.partition_point(|&x| x < interval.lo());
    hi.saturating_sub(lo)
}

/// Overlaps of `a` with the eigenvectors of a minor of an `n x n` matrix.
/// Fails unless `sum xi = n ||a||^2` within `1e-9 n`.
pub fn overlaps_xi(
    minor_spectral: &SpectralDecomposition,
    a: &[Complex64],
    n: usize,
) -> Result<OverlapVector> {
    let vectors = minor_spectral
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("overlaps need eigenvectors".into()))?;
    if a.len() != vectors.n() || n != a.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: vectors.n(),
            got: a.len(),
        });
    }
    let nf = n as f64;
    let xi: Vec<f64> = vectors.iter().map(|u| nf * dotc(a, u).norm_sqr()).collect();
    let total: f64 = xi.iter().sum();
    let expected = nf * a.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if (total - expected).abs() > 1e-9 * nf * expected.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "overlap completeness violated: sum xi = {total}, n |a|^2 = {expected}"
        )));
    }
    Ok(OverlapVector { xi, n })
}

/// `[h_kk - z - (1/N) sum_alpha xi_alpha / (lambda_alpha - z)]^{-1}`.
pub fn resolvent_from_overlaps(
    h_kk: f64,
    xi: &OverlapVector,
    minor_eigenvalues: &[f64],
    z: SpectralPoint,
) -> Complex64 {
    let zz = z.z();
    let nf = xi.n as f64;
    let sum: Complex64 = xi
        .xi
        .iter()
        .zip(minor_eigenvalues)
        .map(|(&x, &l)| x / (l - zz))
        .sum();
    1.0 / (h_kk - zz - sum / nf)
}

/// Diagonal resolvent entry computed two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventPair {
    /// `(H - z)^{-1}(k, k)` by LU solve.
    pub direct: Complex64,
    /// Schur-complement formula through the minor's spectrum.
    pub via_minor: Complex64,
}

impl ResolventPair {
    pub fn discrepancy(&self) -> f64 {
        (self.direct - self.via_minor).norm()
    }
}

/// Tolerance on [`ResolventPair::discrepancy`]: `1e-8 / eta^2`.
pub fn resolvent_tolerance(z: SpectralPoint) -> f64 {
    1e-8 / (z.eta() * z.eta())
}

/// LU factorization of `H - z`. Never singular for `eta > 0` in exact
/// arithmetic.
pub fn shifted_lu(h: &HermitianMatrix, z: SpectralPoint) -> Lu {
    let n = h.n();
    let zz = z.z();
    let a = CMatrix::from_fn(n, n, |i, j| if i == j { h.get(i, j) - zz } else { h.get(i, j) });
    Lu::factor(&a).expect("H - z is invertible for eta > 0")
}

/// `(H - z)^{-1}(k, k)` from a factorization of `H - z`.
pub fn resolvent_entry(lu: &Lu, n: usize, k: usize) -> Complex64 {
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    rhs[k] = Complex64::new(1.0, 0.0);
    lu.solve(&rhs)[k]
}

/// Minor-side evaluation of `G(k, k)`, returning the overlaps used.
pub fn resolvent_via_minor(
    md: &MinorDecomposition,
    minor_spectral: &SpectralDecomposition,
    z: SpectralPoint,
) -> Result<(Complex64, OverlapVector)> {
    let n = md.b.n() + 1;
    let xi = overlaps_xi(minor_spectral, &md.a, n)?;
    let g = resolvent_from_overlaps(md.h_kk, &xi, &minor_spectral.eigenvalues, z);
    Ok((g, xi))
}

/// `(H - z)^{-1}(k, k)` directly and via the minor `B^(k)`.
pub fn resolvent_diag_minor(h: &HermitianMatrix, k: usize, z: SpectralPoint) -> Result<ResolventPair> {
    let md = minor(h, k)?;
    let lu = shifted_lu(h, z);
    let direct = resolvent_entry(&lu, h.n(), k);
    let minor_spectral = eigh(&md.b, true)?;
    let (via_minor, _) = resolvent_via_minor(&md, &minor_spectral, z)?;
    Ok(ResolventPair { direct, via_minor })
}

/// Both sides of `N_I <= (5/4) N eta Im m(E + i eta)` for
/// `I = [E - eta/2, E + eta/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountBound {
    pub lhs: usize,
    pub rhs: f64,
    pub pass: bool,
}

pub fn basic_count_bound(eigenvalues: &[f64], e: f64, eta: f64) -> Result<CountBound> {
    let point = SpectralPoint::new(e, eta)?;
    let lhs = count_in_interval(eigenvalues, SpectralInterval::around(point));
    let n = eigenvalues.len() as f64;
    let rhs = 1.25 * n * eta * stieltjes(eigenvalues, point).im;
    // Each eigenvalue in I contributes at least 4/5 / (N eta) to Im m, so the
    // bound holds with margin unless rounding eats it.
    let slack = 1e-12 * rhs.max(1.0);
    Ok(CountBound {
        lhs,
        rhs,
        pass: lhs as f64 <= rhs + slack,
    })
}

/// `|m - (1 - 1/N) m^(k)|` against `pi / (N eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorGap {
    pub gap: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn minor_stieltjes_gap(h_evals: &[f64], minor_evals: &[f64], z: SpectralPoint) -> Result<MinorGap> {
    let n = h_evals.len();
    if minor_evals.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n.saturating_sub(1),
            got: minor_evals.len(),
        });
    }
    let nf = n as f64;
    let m = stieltjes(h_evals, z);
    let mk = if minor_evals.is_empty() {
        Complex64::new(0.0, 0.0)
    } else {
        stieltjes(minor_evals, z)
    };
    let gap = (m - (1.0 - 1.0 / nf) * mk).norm();
    let bound = PI / (nf * z.eta());
    let slack = 1e-9 / (z.eta() * z.eta());
    Ok(MinorGap {
        gap,
        bound,
        pass: gap <= bound + slack,
    })
}

/// `X = (1/N) sum (xi_alpha - 1) / (lambda_alpha - z)` and
/// `Z = sum_{lambda_alpha in I} xi_alpha`.
pub fn x_and_z_statistics(
    xi: &OverlapVector,
    minor_evals: &[f64],
    z: SpectralPoint,
    interval: SpectralInterval,
) -> (Complex64, f64) {
    let zz = z.z();
    let x: Complex64 = xi
        .xi
        .iter()
        .zip(minor_evals)
        .map(|(&x, &l)| (x - 1.0) / (l - zz))
        .sum::<Complex64>()
        / xi.n as f64;
    let zs = xi
        .xi
        .iter()
        .zip(minor_evals)
        .filter(|(_, &l)| interval.contains(l))
        .map(|(&x, _)| x)
        .sum();
    (x, zs)
}
