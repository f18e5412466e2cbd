//! Dense Hermitian eigensolver.
//!
//! The matrix is reduced to real symmetric tridiagonal form by Householder
//! reflections (`T = Q^H H Q`, nonnegative off-diagonal after a diagonal
//! phase rotation) and the tridiagonal problem is solved by implicit QL
//! iteration with Wilkinson shifts. Eigenvectors of `H` are `Q Z` where `Z`
//! holds the real eigenvectors of `T`.

use num_complex::Complex64;

use crate::ensemble::HermitianMatrix;
use crate::error::{EigenError, Error, Result};
use crate::linalg::CMatrix;

/// Unitary factor of a tridiagonal reduction, stored column-major with split
/// real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryFactor {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl UnitaryFactor {
    fn identity(n: usize) -> Self {
        let mut re = vec![0.0; n * n];
        for j in 0..n {
            re[j * n + j] = 1.0;
        }
        Self {
            n,
            re,
            im: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[j * self.n + i], self.im[j * self.n + i])
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// `T = Q^H H Q` with `T` real symmetric tridiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalForm {
    /// Diagonal of `T`.
    pub d: Vec<f64>,
    /// Off-diagonal of `T`, length `n - 1`, nonnegative.
    pub e: Vec<f64>,
    /// `Q`, absent when only eigenvalues were requested.
    pub q: Option<UnitaryFactor>,
}

impl TridiagonalForm {
    /// A bare tridiagonal matrix (`Q = I` implied).
    pub fn from_parts(d: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if e.len() + 1 != d.len() {
            return Err(Error::DimensionMismatch {
                expected: d.len() - 1,
                got: e.len(),
            });
        }
        Ok(Self { d, e, q: None })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Dense `T` as a complex matrix.
    pub fn to_matrix(&self) -> CMatrix {
        let n = self.n();
        CMatrix::from_fn(n, n, |i, j| {
            let v = if i == j {
                self.d[i]
            } else if i + 1 == j {
                self.e[i]
            } else if j + 1 == i {
                self.e[j]
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        })
    }

    /// Gershgorin bound on `||T||_2`.
    pub fn norm_bound(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.e[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < n { self.e[i].abs() } else { 0.0 };
                self.d[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    /// `(d, e)` as CSV lines `i,d,e`, the last row with empty `e`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,d,e\n");
        for (i, d) in self.d.iter().enumerate() {
            match self.e.get(i) {
                Some(e) => s.push_str(&format!("{i},{d:.16e},{e:.16e}\n")),
                None => s.push_str(&format!("{i},{d:.16e},\n")),
            }
        }
        s
    }
}

/// Orthonormal eigenvectors, one contiguous column per eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenvectors {
    n: usize,
    data: Vec<Complex64>,
}

impl Eigenvectors {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Eigenvector belonging to the `alpha`-th eigenvalue.
    pub fn vector(&self, alpha: usize) -> &[Complex64] {
        &self.data[alpha * self.n..(alpha + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.n)
    }
}

/// Ascending eigenvalues with optional eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<Eigenvectors>,
    /// Upper bound on `max_alpha ||H v_alpha - mu_alpha v_alpha||_2`. Measured
    /// when eigenvectors are present, otherwise an a-priori backward error
    /// bound `8 n eps ||T||`.
    pub residual_bound: f64,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `max |mu|`, which is `||H||_2` for Hermitian `H`.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|m| m.abs()).fold(0.0, f64::max)
    }
}

/// Householder reduction with accumulation of `Q`.
pub fn tridiagonalize(h: &HermitianMatrix) -> TridiagonalForm {
    reduce(h, true)
}

/// Householder reduction without forming `Q`.
pub fn tridiagonalize_values(h: &HermitianMatrix) -> TridiagonalForm {
    reduce(h, false)
}

fn reduce(h: &HermitianMatrix, accumulate: bool) -> TridiagonalForm {
    let n = h.n();
    // Lower triangle of the working matrix, row-major, split storage.
    let mut ar = vec![0.0; n * n];
    let mut ai = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let z = h.get(i, j);
            ar[i * n + j] = z.re;
            ai[i * n + j] = z.im;
        }
    }
    let mut taus = vec![Complex64::new(0.0, 0.0); n];
    let mut sub = vec![Complex64::new(0.0, 0.0); n.saturating_sub(1)];
    let (mut vr, mut vi) = (vec![0.0; n], vec![0.0; n]);
    let (mut pr, mut pi) = (vec![0.0; n], vec![0.0; n]);

    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        for t in 0..m {
            vr[t] = ar[(k + 1 + t) * n + k];
            vi[t] = ai[(k + 1 + t) * n + k];
        }
        let alpha = Complex64::new(vr[0], vi[0]);
        let tail2: f64 = (1..m).map(|t| vr[t] * vr[t] + vi[t] * vi[t]).sum();
        if tail2 == 0.0 && alpha.im == 0.0 {
            sub[k] = alpha;
            continue;
        }
        let beta = -(alpha.norm().hypot(tail2.sqrt())).copysign(alpha.re);
        let tau = Complex64::new((beta - alpha.re) / beta, -alpha.im / beta);
        let scale = 1.0 / (alpha - beta);
        vr[0] = 1.0;
        vi[0] = 0.0;
        for t in 1..m {
            let x = Complex64::new(vr[t], vi[t]) * scale;
            vr[t] = x.re;
            vi[t] = x.im;
            ar[(k + 1 + t) * n + k] = x.re;
            ai[(k + 1 + t) * n + k] = x.im;
        }
        sub[k] = Complex64::new(beta, 0.0);
        taus[k] = tau;

        let o = k + 1;
        hemv_lower(&ar, &ai, n, o, &vr[..m], &vi[..m], &mut pr[..m], &mut pi[..m]);
        // p = tau A v
        for t in 0..m {
            let p = tau * Complex64::new(pr[t], pi[t]);
            pr[t] = p.re;
            pi[t] = p.im;
        }
        // w = p - (tau/2) (p^H v) v
        let mut phv = Complex64::new(0.0, 0.0);
        for t in 0..m {
            phv += Complex64::new(pr[t], -pi[t]) * Complex64::new(vr[t], vi[t]);
        }
        let shift = -0.5 * tau * phv;
        for t in 0..m {
            let w = Complex64::new(pr[t], pi[t]) + shift * Complex64::new(vr[t], vi[t]);
            pr[t] = w.re;
            pi[t] = w.im;
        }
        her2_lower(&mut ar, &mut ai, n, o, &vr[..m], &vi[..m], &pr[..m], &pi[..m]);
    }
    if n >= 2 {
        sub[n - 2] = Complex64::new(ar[(n - 1) * n + n - 2], ai[(n - 1) * n + n - 2]);
    }
    let d: Vec<f64> = (0..n).map(|i| ar[i * n + i]).collect();

    let mut q = if accumulate {
        let mut q = UnitaryFactor::identity(n);
        for k in (0..n.saturating_sub(2)).rev() {
            let tau = taus[k];
            if tau == Complex64::new(0.0, 0.0) {
                continue;
            }
            let m = n - k - 1;
            vr[0] = 1.0;
            vi[0] = 0.0;
            for t in 1..m {
                vr[t] = ar[(k + 1 + t) * n + k];
                vi[t] = ai[(k + 1 + t) * n + k];
            }
            for c in (k + 1)..n {
                let col_r = &mut q.re[c * n + k + 1..(c + 1) * n];
                let col_i = &mut q.im[c * n + k + 1..(c + 1) * n];
                // s = v^H q_c
                let (mut sr, mut si) = (0.0, 0.0);
                for t in 0..m {
                    sr += vr[t] * col_r[t] + vi[t] * col_i[t];
                    si += vr[t] * col_i[t] - vi[t] * col_r[t];
                }
                let f = tau * Complex64::new(sr, si);
                for t in 0..m {
                    col_r[t] -= f.re * vr[t] - f.im * vi[t];
                    col_i[t] -= f.re * vi[t] + f.im * vr[t];
                }
            }
        }
        Some(q)
    } else {
        None
    };

    // Diagonal phase rotation making the off-diagonal real and nonnegative.
    let mut e = Vec::with_capacity(n.saturating_sub(1));
    let mut phase = Complex64::new(1.0, 0.0);
    for (j, s) in sub.iter().enumerate() {
        let g = s * phase;
        let mag = g.norm();
        phase = if mag > 0.0 { g / mag } else { Complex64::new(1.0, 0.0) };
        e.push(mag);
        if let Some(q) = q.as_mut() {
            if phase != Complex64::new(1.0, 0.0) {
                let col = j + 1;
                for i in 0..n {
                    let z = Complex64::new(q.re[col * n + i], q.im[col * n + i]) * phase;
                    q.re[col * n + i] = z.re;
                    q.im[col * n + i] = z.im;
                }
            }
        }
    }
    TridiagonalForm { d, e, q }
}

/// `p = A v` on the trailing block `o..n` of a Hermitian matrix stored as its
/// lower triangle.
#[allow(clippy::too_many_arguments)]
fn hemv_lower(
    ar: &[f64],
    ai: &[f64],
    n: usize,
    o: usize,
    vr: &[f64],
    vi: &[f64],
    pr: &mut [f64],
    pi: &mut [f64],
) {
    pr.fill(0.0);
    pi.fill(0.0);
    const LANES: usize = 8;
    for t in 0..vr.len() {
        let row = (o + t) * n + o;
        let (rr, ri) = (&ar[row..row + t], &ai[row..row + t]);
        let (xr, xi) = (vr[t], vi[t]);
        // Strictly lower part of row t: p_j += conj(A_tj) v_t.
        for ((p, q), (&a, &b)) in pr[..t].iter_mut().zip(pi[..t].iter_mut()).zip(rr.iter().zip(ri)) {
            *p += a * xr + b * xi;
            *q += a * xi - b * xr;
        }
        // p_t += sum_j A_tj v_j, accumulated in fixed lanes.
        let mut sr = [0.0; LANES];
        let mut si = [0.0; LANES];
        let chunks = t / LANES * LANES;
        for c in (0..chunks).step_by(LANES) {
            let (a, b) = (&rr[c..c + LANES], &ri[c..c + LANES]);
            let (x, y) = (&vr[c..c + LANES], &vi[c..c + LANES]);
            for l in 0..LANES {
                sr[l] += a[l] * x[l] - b[l] * y[l];
                si[l] += a[l] * y[l] + b[l] * x[l];
            }
        }
        let mut tr: f64 = sr.iter().sum();
        let mut ti: f64 = si.iter().sum();
        for j in chunks..t {
            tr += rr[j] * vr[j] - ri[j] * vi[j];
            ti += rr[j] * vi[j] + ri[j] * vr[j];
        }
        let diag = ar[row + t];
        pr[t] += tr + diag * xr;
        pi[t] += ti + diag * xi;
    }
}

/// `A -= v w^H + w v^H` on the lower triangle of the trailing block.
#[allow(clippy::too_many_arguments)]
fn her2_lower(
    ar: &mut [f64],
    ai: &mut [f64],
    n: usize,
    o: usize,
    vr: &[f64],
    vi: &[f64],
    wr: &[f64],
    wi: &[f64],
) {
    for t in 0..vr.len() {
        let row = (o + t) * n + o;
        let (rr, ri) = (&mut ar[row..=row + t], &mut ai[row..=row + t]);
        let (a, b, c, d) = (vr[t], vi[t], wr[t], wi[t]);
        for j in 0..=t {
            rr[j] -= a * wr[j] + b * wi[j] + c * vr[j] + d * vi[j];
            ri[j] -= b * wr[j] - a * wi[j] + d * vr[j] - c * vi[j];
        }
        ri[t] = 0.0;
    }
}

/// Implicit QL with Wilkinson shifts on `(d, e)`. When `z` is given, it holds
/// `n` rows, row `i` being column `i` of the accumulated rotation matrix.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<(), EigenError> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    // e padded to length n, e[n-1] = 0.
    let max_iterations = 50 * n;
    let mut iterations = 0;
    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                if e[m].abs() <= f64::EPSILON * (d[m].abs() + d[m + 1].abs()) {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > max_iterations {
                return Err(EigenError::NoConvergence {
                    index: l,
                    iterations,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for k in 0..n {
                        let f = zi1[k];
                        zi1[k] = s * zi[k] + c * f;
                        zi[k] = c * zi[k] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn stable_ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Multiplies `v` by a unit phase so its first non-negligible component is
/// real and nonnegative.
fn normalize_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|z| z.norm() > f64::EPSILON * max) {
        let phase = first.conj() / first.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// Eigen-decomposition of a tridiagonal form. With `want_vectors`, the
/// eigenvectors are those of the original matrix `Q T Q^H` (of `T` itself
/// when `q` is absent).
pub fn tridiagonal_eigen(
    t: &TridiagonalForm,
    want_vectors: bool,
) -> Result<SpectralDecomposition, EigenError> {
    let n = t.n();
    let mut d = t.d.clone();
    let mut e = t.e.clone();
    e.push(0.0);
    let norm = t.norm_bound();

    if !want_vectors {
        ql_implicit(&mut d, &mut e, None)?;
        let order = stable_ascending_order(&d);
        return Ok(SpectralDecomposition {
            eigenvalues: order.iter().map(|&i| d[i]).collect(),
            eigenvectors: None,
            residual_bound: 8.0 * n as f64 * f64::EPSILON * norm,
        });
    }

    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    ql_implicit(&mut d, &mut e, Some(&mut z))?;
    let order = stable_ascending_order(&d);

    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    let (mut vr, mut vi) = (vec![0.0; n], vec![0.0; n]);
    for (alpha, &src) in order.iter().enumerate() {
        let zc = &z[src * n..(src + 1) * n];
        match &t.q {
            Some(q) => {
                vr.fill(0.0);
                vi.fill(0.0);
                for (j, &coef) in zc.iter().enumerate() {
                    if coef == 0.0 {
                        continue;
                    }
                    let (cr, ci) = (&q.re[j * n..(j + 1) * n], &q.im[j * n..(j + 1) * n]);
                    for i in 0..n {
                        vr[i] += coef * cr[i];
                        vi[i] += coef * ci[i];
                    }
                }
            }
            None => {
                vr.copy_from_slice(zc);
                vi.fill(0.0);
            }
        }
        let v = &mut data[alpha * n..(alpha + 1) * n];
        for i in 0..n {
            v[i] = Complex64::new(vr[i], vi[i]);
        }
        normalize_phase(v);
    }
    Ok(SpectralDecomposition {
        eigenvalues: order.iter().map(|&i| d[i]).collect(),
        eigenvectors: Some(Eigenvectors { n, data }),
        residual_bound: 8.0 * n as f64 * f64::EPSILON * norm,
    })
}

/// Certified eigen-decomposition of a Hermitian matrix.
///
/// With vectors, the residual bound is the measured maximum residual and
/// orthonormality, trace and Frobenius conservation are checked. Without
/// vectors, trace and Frobenius conservation are checked and the residual
/// bound is a-priori.
pub fn eigh(h: &HermitianMatrix, want_vectors: bool) -> Result<SpectralDecomposition, EigenError> {
    let t = if want_vectors {
        tridiagonalize(h)
    } else {
        tridiagonalize_values(h)
    };
    let mut dec = tridiagonal_eigen(&t, want_vectors)?;
    let n = h.n() as f64;
    let hmax = h.max_abs();

    check(
        "trace error",
        (dec.eigenvalues.iter().sum::<f64>() - h.trace()).abs(),
        1e-10 * n * hmax,
    )?;
    check(
        "Frobenius error",
        (dec.eigenvalues.iter().map(|m| m * m).sum::<f64>() - h.frobenius_norm_sqr()).abs(),
        1e-9 * n * hmax.powi(2).max(1.0),
    )?;

    if let Some(vectors) = &dec.eigenvectors {
        let residual = max_residual(h, &dec.eigenvalues, vectors);
        check("residual", residual, 1e-10 * n * dec.spectral_norm())?;
        check("orthonormality error", orthonormality_error(vectors), 1e-10 * n)?;
        dec.residual_bound = residual;
    }
    Ok(dec)
}

/// Eigenvalues only.
pub fn eigvalsh(h: &HermitianMatrix) -> Result<SpectralDecomposition, EigenError> {
    eigh(h, false)
}

fn check(what: &'static str, value: f64, limit: f64) -> Result<(), EigenError> {
    if value <= limit {
        Ok(())
    } else {
        Err(EigenError::Certification { what, value, limit })
    }
}

/// `max_alpha ||H v_alpha - mu_alpha v_alpha||_2`.
pub fn max_residual(h: &HermitianMatrix, eigenvalues: &[f64], vectors: &Eigenvectors) -> f64 {
    eigenvalues
        .iter()
        .zip(vectors.iter())
        .map(|(&mu, v)| {
            let hv = h.mul_vec(v);
            hv.iter()
                .zip(v)
                .map(|(a, b)| (a - mu * b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `||V^H V - I||_max`.
pub fn orthonormality_error(vectors: &Eigenvectors) -> f64 {
    let cols: Vec<&[Complex64]> = vectors.iter().collect();
    let mut worst: f64 = 0.0;
    for a in 0..cols.len() {
        for b in a..cols.len() {
            let g = crate::linalg::dotc(cols[a], cols[b]);
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g - target).norm());
        }
    }
    worst
}

/// Outcome of an interlacing check between `H` and one of its minors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterlacingReport {
    pub holds: bool,
    /// Largest of `mu_alpha - lambda_alpha` and `lambda_alpha - mu_{alpha+1}`;
    /// nonpositive when interlacing holds exactly.
    pub max_violation: f64,
    pub slack: f64,
}

/// Checks `mu_1 <= lambda_1 <= mu_2 <= ... <= lambda_{n-1} <= mu_n` with
/// slack twice the sum of the residual bounds.
pub fn interlacing_check(
    h_decomp: &SpectralDecomposition,
    minor_decomp: &SpectralDecomposition,
) -> Result<InterlacingReport> {
    let n = h_decomp.n();
    if minor_decomp.n() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n.saturating_sub(1),
            got: minor_decomp.n(),
        });
    }
    let mu = &h_decomp.eigenvalues;
    let lambda = &minor_decomp.eigenvalues;
    let max_violation = lambda
        .iter()
        .enumerate()
        .map(|(a, &l)| (mu[a] - l).max(l - mu[a + 1]))
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 2.0 * (h_decomp.residual_bound + minor_decomp.residual_bound);
    Ok(InterlacingReport {
        holds: !(max_violation > slack),
        max_violation,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{minor, sample_wigner, EntryDistributionSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ulp_tol(n: usize) -> f64 {
        64.0 * n as f64 * f64::EPSILON
    }

    fn check_reduction(h: &HermitianMatrix) {
        let n = h.n();
        let t = tridiagonalize(h);
        let q = t.q.as_ref().unwrap().to_matrix();
        let qhq = q.adjoint().matmul(&q);
        assert!(qhq.max_abs_diff(&CMatrix::identity(n)) <= ulp_tol(n));
        let similar = q.adjoint().matmul(&CMatrix::from_hermitian(h)).matmul(&q);
        assert!(
            similar.max_abs_diff(&t.to_matrix()) <= ulp_tol(n) * h.max_abs(),
            "similarity error {}",
            similar.max_abs_diff(&t.to_matrix())
        );
        assert!(t.e.iter().all(|&x| x >= 0.0));
        let values_only = tridiagonalize_values(h);
        assert_eq!(values_only.d, t.d);
        assert_eq!(values_only.e, t.e);
    }

    #[test]
    fn tridiagonal_real_input_is_unchanged() {
        let d = [1.0, -2.0, 0.5, 3.0];
        let e = [0.25, 1.5, 0.75];
        let h = HermitianMatrix::from_upper(4, |i, j| {
            if i == j {
                c(d[i], 0.0)
            } else if j == i + 1 {
                c(e[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
        .unwrap();
        let t = tridiagonalize(&h);
        assert_eq!(t.d, d);
        assert_eq!(t.e, e);
        assert_eq!(t.q.unwrap().to_matrix(), CMatrix::identity(4));
    }

    #[test]
    fn two_by_two_phase_rotation() {
        let h = HermitianMatrix::from_upper(2, |i, j| if i == j { c(0.0, 0.0) } else { c(0.0, 1.0) })
            .unwrap();
        let t = tridiagonalize(&h);
        assert_eq!(t.d, vec![0.0, 0.0]);
        assert_eq!(t.e, vec![1.0]);
        check_reduction(&h);
    }

    #[test]
    fn random_reduction_is_a_unitary_similarity() {
        for (n, seed) in [(3, 1), (7, 2), (32, 3), (128, 4)] {
            let h = sample_wigner(n, &EntryDistributionSpec::gue(), seed).unwrap();
            check_reduction(&h);
        }
    }

    #[test]
    fn tridiagonal_examples() {
        let dec = tridiagonal_eigen(&TridiagonalForm::from_parts(vec![2.0, 2.0], vec![0.0]).unwrap(), false)
            .unwrap();
        assert_eq!(dec.eigenvalues, vec![2.0, 2.0]);

        let dec = tridiagonal_eigen(&TridiagonalForm::from_parts(vec![0.0, 0.0], vec![1.0]).unwrap(), true)
            .unwrap();
        assert!((dec.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((dec.eigenvalues[1] - 1.0).abs() < 1e-15);

        let dec = tridiagonal_eigen(
            &TridiagonalForm::from_parts(vec![0.0; 3], vec![1.0, 1.0]).unwrap(),
            false,
        )
        .unwrap();
        let s = 2.0_f64.sqrt();
        for (got, want) in dec.eigenvalues.iter().zip([-s, 0.0, s]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn diagonal_matrix_gives_permuted_identity() {
        let h = HermitianMatrix::from_real_diagonal(&[3.0, 1.0, 2.0]).unwrap();
        let dec = eigh(&h, true).unwrap();
        assert_eq!(dec.eigenvalues, vec![1.0, 2.0, 3.0]);
        let v = dec.eigenvectors.unwrap();
        for (alpha, idx) in [1usize, 2, 0].iter().enumerate() {
            for i in 0..3 {
                let want = if i == *idx { 1.0 } else { 0.0 };
                assert_eq!(v.vector(alpha)[i], c(want, 0.0));
            }
        }
    }

    #[test]
    fn swap_matrix_vectors() {
        let h = HermitianMatrix::from_upper(2, |i, j| if i == j { c(0.0, 0.0) } else { c(1.0, 0.0) })
            .unwrap();
        let dec = eigh(&h, true).unwrap();
        assert!((dec.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((dec.eigenvalues[1] - 1.0).abs() < 1e-15);
        let v = dec.eigenvectors.unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // Phase convention: first component real and nonnegative.
        assert!((v.vector(0)[0] - c(r, 0.0)).norm() < 1e-15);
        assert!((v.vector(0)[1] - c(-r, 0.0)).norm() < 1e-15);
        assert!((v.vector(1)[0] - c(r, 0.0)).norm() < 1e-15);
        assert!((v.vector(1)[1] - c(r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn wigner_256_certifies() {
        let h = sample_wigner(256, &EntryDistributionSpec::gue(), 99).unwrap();
        let dec = eigh(&h, true).unwrap();
        let v = dec.eigenvectors.as_ref().unwrap();
        assert!(dec.residual_bound <= 1e-10 * 256.0 * dec.spectral_norm());
        assert!(max_residual(&h, &dec.eigenvalues, v) <= dec.residual_bound);
        assert!(orthonormality_error(v) <= 1e-10 * 256.0);
        assert!(dec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let values = eigvalsh(&h).unwrap();
        for (a, b) in values.eigenvalues.iter().zip(&dec.eigenvalues) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_by_one() {
        let h = HermitianMatrix::from_real_diagonal(&[-0.7]).unwrap();
        let dec = eigh(&h, true).unwrap();
        assert_eq!(dec.eigenvalues, vec![-0.7]);
        assert_eq!(dec.eigenvectors.unwrap().vector(0), &[c(1.0, 0.0)]);
    }

    #[test]
    fn phase_convention_is_deterministic() {
        let h = sample_wigner(12, &EntryDistributionSpec::gue(), 8).unwrap();
        let dec = eigh(&h, true).unwrap();
        for v in dec.eigenvectors.unwrap().iter() {
            let first = v.iter().find(|z| z.norm() > 1e-12).unwrap();
            assert_eq!(first.im, 0.0);
            assert!(first.re > 0.0);
        }
    }

    #[test]
    fn interlacing_examples() {
        let h = HermitianMatrix::from_upper(2, |i, j| if i == j { c(0.0, 0.0) } else { c(1.0, 0.0) })
            .unwrap();
        let full = eigh(&h, false).unwrap();
        let m = minor(&h, 0).unwrap();
        let part = eigh(&m.b, false).unwrap();
        assert_eq!(part.eigenvalues, vec![0.0]);
        let r = interlacing_check(&full, &part).unwrap();
        assert!(r.holds);
        assert!((r.max_violation + 1.0).abs() < 1e-15);

        let flat = HermitianMatrix::from_real_diagonal(&[0.3; 5]).unwrap();
        let full = eigh(&flat, false).unwrap();
        let part = eigh(&minor(&flat, 2).unwrap().b, false).unwrap();
        let r = interlacing_check(&full, &part).unwrap();
        assert!(r.holds);
        assert_eq!(r.max_violation, 0.0);

        assert!(interlacing_check(&full, &full).is_err());
    }

    #[test]
    fn convergence_failure_reports_index() {
        let mut d = vec![0.0, 0.0, 0.0];
        let mut e = vec![f64::NAN, 1.0, 0.0];
        let err = ql_implicit(&mut d, &mut e, None).unwrap_err();
        assert!(matches!(err, EigenError::NoConvergence { index: 0, .. }));
    }

    #[test]
    fn tridiagonal_csv_dump() {
        let t = TridiagonalForm::from_parts(vec![1.0, 2.0], vec![0.5]).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("i,d,e\n0,1.0000000000000000e0,5.0000000000000000e-1\n"));
        assert!(csv.ends_with("1,2.0000000000000000e0,\n"));
    }
}
