//! Wigner ensembles: entry laws, matrix sampling and minor extraction.
//!
//! Entries follow the standard normalization `h_ij = z_ij / sqrt(n)` above
//! the diagonal and `h_ii = x_ii / sqrt(n)` on it, where the off-diagonal
//! law has `E z = 0, E|z|^2 = 1` and the diagonal law `E x = 0, E x^2 = 1`.
//! Every off-diagonal family either has i.i.d. real and imaginary parts or is
//! rotationally invariant.

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of the off-diagonal entries `z_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffDiagonalFamily {
    /// Standard complex gaussian drawn in polar form: `|z|^2 ~ Exp(1)`,
    /// uniform phase. Rotationally invariant.
    ComplexGaussian,
    /// Real and imaginary parts i.i.d. uniform on `[-sqrt(3/2), sqrt(3/2)]`.
    ProductUniform,
    /// Uniform on the disk of radius `sqrt(2)`.
    RadialUniform,
    /// Real and imaginary parts i.i.d. `N(0, 1/2)`. Same law as
    /// [`OffDiagonalFamily::ComplexGaussian`], sampled through the product branch.
    ProductGaussian,
}

/// Law of the diagonal entries `x_ii`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalFamily {
    RealGaussian,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    RealUniform,
}

/// Structure of the off-diagonal density `h(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityStructure {
    /// `h(x, y) = h*(x) h*(y)`.
    Product,
    /// `h(x, y) = h*(x^2 + y^2)`.
    Radial,
}

impl OffDiagonalFamily {
    pub const ALL: [OffDiagonalFamily; 4] = [
        OffDiagonalFamily::ComplexGaussian,
        OffDiagonalFamily::ProductUniform,
        OffDiagonalFamily::RadialUniform,
        OffDiagonalFamily::ProductGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OffDiagonalFamily::ComplexGaussian => "complex-gaussian",
            OffDiagonalFamily::ProductUniform => "product-uniform",
            OffDiagonalFamily::RadialUniform => "radial-uniform",
            OffDiagonalFamily::ProductGaussian => "product-gaussian",
        }
    }

    pub fn structure(self) -> DensityStructure {
        match self {
            OffDiagonalFamily::ComplexGaussian | OffDiagonalFamily::RadialUniform => {
                DensityStructure::Radial
            }
            OffDiagonalFamily::ProductUniform | OffDiagonalFamily::ProductGaussian => {
                DensityStructure::Product
            }
        }
    }

    /// Supremum of `delta` for which `E exp(delta |z|^2)` is finite, or `None`
    /// when the law is bounded.
    pub fn critical_exponent(self) -> Option<f64> {
        match self {
            OffDiagonalFamily::ComplexGaussian | OffDiagonalFamily::ProductGaussian => Some(1.0),
            OffDiagonalFamily::ProductUniform | OffDiagonalFamily::RadialUniform => None,
        }
    }

    /// Decay of the Fourier transform of the density, documented only.
    ///
    /// The gaussian families decay faster than any power. The uniform laws
    /// have a jump at the boundary of their support, so their transforms
    /// decay only polynomially (square: `|p|^-1` per axis, disk: `|p|^-3/2`)
    /// and do not meet high smoothness exponents.
    pub fn fourier_decay_note(self) -> &'static str {
        match self {
            OffDiagonalFamily::ComplexGaussian | OffDiagonalFamily::ProductGaussian => {
                "gaussian: superpolynomial decay, every exponent a"
            }
            OffDiagonalFamily::ProductUniform => {
                "square boundary discontinuity: |p|^-1 decay per axis"
            }
            OffDiagonalFamily::RadialUniform => "disk boundary discontinuity: |p|^-3/2 decay",
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Complex64 {
        match self {
            OffDiagonalFamily::ComplexGaussian => {
                let r2: f64 = rng.sample(Exp1);
                let theta = 2.0 * PI * rng.random::<f64>();
                Complex64::from_polar(r2.sqrt(), theta)
            }
            OffDiagonalFamily::ProductUniform => {
                let a = 1.5_f64.sqrt();
                let x = rng.random_range(-a..a);
                let y = rng.random_range(-a..a);
                Complex64::new(x, y)
            }
            OffDiagonalFamily::RadialUniform => {
                let r = SQRT_2 * rng.random::<f64>().sqrt();
                let theta = 2.0 * PI * rng.random::<f64>();
                Complex64::from_polar(r, theta)
            }
            OffDiagonalFamily::ProductGaussian => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                Complex64::new(s * x, s * y)
            }
        }
    }
}

impl DiagonalFamily {
    pub fn name(self) -> &'static str {
        match self {
            DiagonalFamily::RealGaussian => "real-gaussian",
            DiagonalFamily::RealUniform => "real-uniform",
        }
    }

    pub fn critical_exponent(self) -> Option<f64> {
        match self {
            DiagonalFamily::RealGaussian => Some(0.5),
            DiagonalFamily::RealUniform => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            DiagonalFamily::RealGaussian => rng.sample(StandardNormal),
            DiagonalFamily::RealUniform => {
                let a = 3.0_f64.sqrt();
                rng.random_range(-a..a)
            }
        }
    }
}

/// Entry law of a Wigner ensemble. Serializes as
/// `{"family": "...", "diagonal": "..."}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntryDistributionSpec {
    pub family: OffDiagonalFamily,
    #[serde(default = "default_diagonal")]
    pub diagonal: DiagonalFamily,
}

fn default_diagonal() -> DiagonalFamily {
    DiagonalFamily::RealGaussian
}

impl Default for EntryDistributionSpec {
    fn default() -> Self {
        Self::gue()
    }
}

impl EntryDistributionSpec {
    pub fn new(family: OffDiagonalFamily, diagonal: DiagonalFamily) -> Self {
        Self { family, diagonal }
    }

    /// Complex gaussian off-diagonal, unit-variance real gaussian diagonal:
    /// the Gaussian Unitary Ensemble.
    pub fn gue() -> Self {
        Self::new(OffDiagonalFamily::ComplexGaussian, DiagonalFamily::RealGaussian)
    }

    pub fn is_gue(&self) -> bool {
        matches!(
            self.family,
            OffDiagonalFamily::ComplexGaussian | OffDiagonalFamily::ProductGaussian
        ) && self.diagonal == DiagonalFamily::RealGaussian
    }
}

/// Draws one off-diagonal entry `z` from the law in `spec`.
pub fn sample_offdiagonal<R: Rng + ?Sized>(spec: &EntryDistributionSpec, rng: &mut R) -> Complex64 {
    spec.family.sample(rng)
}

/// Per-sample generator: ChaCha8 keyed by the master seed, with the sample
/// index selecting one of its 2^64 independent streams.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Dense `n x n` Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    entries: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Wraps row-major entries, checking Hermitian symmetry exactly.
    pub fn from_entries(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        for i in 0..n {
            if entries[i * n + i].im != 0.0 {
                return Err(Error::NotHermitian { row: i, col: i });
            }
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i].conj() {
                    return Err(Error::NotHermitian { row: i, col: j });
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Builds the matrix from its upper triangle (diagonal imaginary parts
    /// are dropped).
    pub fn from_upper<F: FnMut(usize, usize) -> Complex64>(n: usize, mut f: F) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                if i == j {
                    entries[i * n + i] = Complex64::new(v.re, 0.0);
                } else {
                    entries[i * n + j] = v;
                    entries[j * n + i] = v.conj();
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::from_upper(n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `H v` for a complex vector.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Copy with `delta` added to the real diagonal entry `i`.
    pub fn with_diagonal_shift(&self, i: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.entries[i * self.n + i].re += delta;
        out
    }

    /// Little-endian dump: `u64` dimension, then row-major `(re, im)` pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for z in &self.entries {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut entries = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            let im = f64::from_le_bytes(word);
            entries.push(Complex64::new(re, im));
        }
        Self::from_entries(n, entries)
    }
}

/// Samples a Wigner matrix with a generator seeded from `seed`.
pub fn sample_wigner(n: usize, spec: &EntryDistributionSpec, seed: u64) -> Result<HermitianMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_wigner_with(n, spec, &mut rng)
}

/// Samples a Wigner matrix from an explicit generator. Entries are drawn in
/// row-major order over the upper triangle, diagonal included.
pub fn sample_wigner_with<R: Rng + ?Sized>(
    n: usize,
    spec: &EntryDistributionSpec,
    rng: &mut R,
) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let scale = 1.0 / (n as f64).sqrt();
    HermitianMatrix::from_upper(n, |i, j| {
        if i == j {
            Complex64::new(scale * spec.diagonal.sample(rng), 0.0)
        } else {
            scale * spec.family.sample(rng)
        }
    })
}

/// Samples the tridiagonal form of an `n x n` GUE matrix directly: the
/// diagonal is `N(0, 1) / sqrt(n)` and `e_i = sqrt(G_i / n)` with
/// `G_i ~ Gamma(n - 1 - i, 1)`. The spectrum has exactly the GUE law.
pub fn sample_gue_tridiagonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (n as f64).sqrt();
    let d = (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let e = (0..n.saturating_sub(1))
        .map(|i| {
            let shape = (n - 1 - i) as f64;
            let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
            scale * g.sqrt()
        })
        .collect();
    (d, e)
}

/// `H` split at index `k`: the minor with row and column `k` removed, the
/// removed column without its diagonal entry, and the diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorDecomposition {
    pub k: usize,
    pub b: HermitianMatrix,
    pub a: Vec<Complex64>,
    pub h_kk: f64,
}

impl MinorDecomposition {
    /// Rebuilds the original matrix.
    pub fn reassemble(&self) -> HermitianMatrix {
        let n = self.b.n() + 1;
        let k = self.k;
        let skip = |i: usize| if i < k { i } else { i - 1 };
        HermitianMatrix::from_upper(n, |i, j| {
            if i == k && j == k {
                Complex64::new(self.h_kk, 0.0)
            } else if j == k {
                self.a[skip(i)]
            } else if i == k {
                self.a[skip(j)].conj()
            } else {
                self.b.get(skip(i), skip(j))
            }
        })
        .expect("n >= 2")
    }
}

/// Extracts the minor at zero-based index `k`.
pub fn minor(h: &HermitianMatrix, k: usize) -> Result<MinorDecomposition> {
    let n = h.n();
    if n < 2 {
        return Err(Error::InvalidArgument("minor requires n >= 2".into()));
    }
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, n });
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let mut entries = Vec::with_capacity((n - 1) * (n - 1));
    for &i in &keep {
        for &j in &keep {
            entries.push(h.get(i, j));
        }
    }
    let b = HermitianMatrix {
        n: n - 1,
        entries,
    };
    let a = keep.iter().map(|&i| h.get(i, k)).collect();
    Ok(MinorDecomposition {
        k,
        b,
        a,
        h_kk: h.get(k, k).re,
    })
}

/// Summary of an exponential-moment check for one scalar law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpMomentEstimate {
    /// Empirical `E exp(delta0 * x^2)`.
    pub value: f64,
    pub stderr: f64,
    /// Estimate from the first half of the draws.
    pub half_sample_value: f64,
    /// Doubling the sample size moved the estimate by more than 5%.
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub n_samples: usize,
    pub mean_re: f64,
    pub mean_im: f64,
    /// Standard error of each mean component.
    pub mean_stderr: f64,
    pub second_moment: f64,
    pub second_moment_stderr: f64,
    pub variance: f64,
    pub offdiagonal: ExpMomentEstimate,
    /// `None` when `delta0` is at or beyond the diagonal law's critical exponent.
    pub diagonal: Option<ExpMomentEstimate>,
}

fn exp_moment(values: &[f64], delta0: f64) -> ExpMomentEstimate {
    let f: Vec<f64> = values.iter().map(|&x| (delta0 * x).exp()).collect();
    let n = f.len() as f64;
    let half = &f[..f.len() / 2];
    let mean = f.iter().sum::<f64>() / n;
    let half_mean = half.iter().sum::<f64>() / half.len() as f64;
    let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let divergent = !((mean - half_mean).abs() <= 0.05 * mean.abs());
    ExpMomentEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
        half_sample_value: half_mean,
        divergent,
    }
}

/// Empirical check of the centering, unit variance and gaussian decay
/// `E exp(delta0 |z|^2) < inf` of the entry laws.
pub fn verify_moment_conditions(
    spec: &EntryDistributionSpec,
    delta0: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MomentReport> {
    if !(delta0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta0 must be >= 0, got {delta0}")));
    }
    if let Some(crit) = spec.family.critical_exponent() {
        if delta0 >= crit {
            return Err(Error::InvalidArgument(format!(
                "delta0 = {delta0} is not below the critical exponent {crit} of {}",
                spec.family.name()
            )));
        }
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<Complex64> = (0..n_samples).map(|_| spec.family.sample(&mut rng)).collect();
    let x: Vec<f64> = (0..n_samples).map(|_| spec.diagonal.sample(&mut rng)).collect();

    let n = n_samples as f64;
    let mean: Complex64 = z.iter().sum::<Complex64>() / n;
    let abs2: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
    let second = abs2.iter().sum::<f64>() / n;
    let second_var = abs2.iter().map(|v| (v - second).powi(2)).sum::<f64>() / (n - 1.0);
    // Each component has variance E|z|^2 / 2 under the unit normalization.
    let mean_stderr = (second / 2.0 / n).sqrt();

    let diagonal = match spec.diagonal.critical_exponent() {
        Some(c) if delta0 >= c => None,
        _ => {
            let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
            Some(exp_moment(&x2, delta0))
        }
    };

    Ok(MomentReport {
        n_samples,
        mean_re: mean.re,
        mean_im: mean.im,
        mean_stderr,
        second_moment: second,
        second_moment_stderr: (second_var / n).sqrt(),
        variance: second - mean.norm_sqr(),
        offdiagonal: exp_moment(&abs2, delta0),
        diagonal,
    })
}
