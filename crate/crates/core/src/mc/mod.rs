//! Seeded, parallel Monte Carlo harness.
//!
//! Sample `s` draws its matrix from the ChaCha8 stream `s` of the master
//! seed, so every sample is a pure function of `(config, s)`. Samples are
//! folded sequentially inside fixed-size chunks and the chunk accumulators
//! are merged in chunk order, which makes every floating-point sum, and hence
//! every output byte, independent of the number of workers.

pub mod estimate;
pub mod experiments;
pub mod identities;
pub mod table;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{eigh, tridiagonal_eigen, SpectralDecomposition, TridiagonalForm};
use crate::ensemble::{
    sample_gue_tridiagonal, sample_wigner_with, stream_rng, EntryDistributionSpec, HermitianMatrix,
};
use crate::error::{EigenError, Error, Result};

pub use estimate::{fit_power_law, tail_probability, EstimateWithCI, ExponentFit, MomentAccumulator, TailBin};

/// Samples per work item.
pub const CHUNK: u64 = 32;

/// Largest tolerated fraction of failed samples.
pub const MAX_FAILURE_RATE: f64 = 1e-3;

/// How a sample's spectrum is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Dense Wigner matrix, Householder reduction, QL.
    #[default]
    Dense,
    /// GUE only: the tridiagonal matrix that Householder reduction of a GUE
    /// matrix produces in distribution (independent gaussian diagonal,
    /// chi-distributed off-diagonal), then QL. Eigenvalues only.
    GueTridiagonal,
}

/// Parameters shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub spec: EntryDistributionSpec,
    pub n_samples: u64,
    pub master_seed: u64,
    pub energy: f64,
    pub kappa: f64,
    /// eta, epsilon, K, M or delta grid depending on the experiment.
    pub grid: Vec<f64>,
    /// Repulsion order / moment order.
    pub k: u32,
    pub p_norm: f64,
    /// Exceedance threshold.
    pub delta: f64,
    pub workers: usize,
    pub sampler: Sampler,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 128,
            spec: EntryDistributionSpec::gue(),
            n_samples: 100,
            master_seed: 0,
            energy: 0.0,
            kappa: 0.5,
            grid: Vec::new(),
            k: 2,
            p_norm: 4.0,
            delta: 0.1,
            workers: 1,
            sampler: Sampler::Dense,
        }
    }
}

impl ExperimentConfig {
    /// Full check, including a strictly positive grid.
    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        self.check_grid(false)
    }

    /// Grid values must be positive (or nonnegative with `allow_zero`) and
    /// strictly ascending.
    pub fn check_grid(&self, allow_zero: bool) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let ok = |g: f64| g.is_finite() && (g > 0.0 || (allow_zero && g == 0.0));
        if self.grid.iter().any(|g| !ok(*g)) {
            return bad(if allow_zero {
                "grid values must be nonnegative".into()
            } else {
                "grid values must be strictly positive".into()
            });
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("grid must be sorted strictly ascending".into());
        }
        Ok(())
    }

    /// Checks everything except the grid.
    pub fn validate_common(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.n_samples == 0 {
            return bad("n_samples must be >= 1".into());
        }
        if !(self.kappa > 0.0 && self.kappa < 2.0) {
            return bad(format!("kappa must lie in (0, 2), got {}", self.kappa));
        }
        if !(self.energy.abs() < 2.0 - self.kappa) {
            return bad(format!(
                "energy {} outside the bulk (-2 + kappa, 2 - kappa) with kappa = {}",
                self.energy, self.kappa
            ));
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(self.p_norm >= 2.0) {
            return bad(format!("p must be >= 2, got {}", self.p_norm));
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.sampler == Sampler::GueTridiagonal && !self.spec.is_gue() {
            return bad("the gue-tridiagonal sampler requires the GUE entry law".into());
        }
        Ok(())
    }
}

/// What a reducer needs from each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    /// The dense matrix only; the reducer decomposes what it needs.
    Matrix,
    Eigenvalues,
    Eigenvectors,
}

/// One sample handed to a reducer.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub index: u64,
    pub matrix: Option<&'a HermitianMatrix>,
    pub spectrum: Option<&'a SpectralDecomposition>,
}

impl<'a> Sample<'a> {
    pub fn matrix(&self) -> &'a HermitianMatrix {
        self.matrix.expect("reducer requested the matrix")
    }

    pub fn spectrum(&self) -> &'a SpectralDecomposition {
        self.spectrum.expect("reducer requested the spectrum")
    }
}

/// Whether a sample entered the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Used,
    Censored,
}

/// Order-independent merge of per-chunk state.
pub trait Accumulator: Default + Send {
    fn merge(&mut self, other: Self);
}

impl Accumulator for Vec<u64> {
    fn merge(&mut self, other: Self) {
        if self.len() < other.len() {
            self.resize(other.len(), 0);
        }
        for (a, b) in self.iter_mut().zip(other) {
            *a += b;
        }
    }
}

impl Accumulator for Vec<f64> {
    fn merge(&mut self, mut other: Self) {
        self.append(&mut other);
    }
}

impl Accumulator for MomentAccumulator {
    fn merge(&mut self, other: Self) {
        MomentAccumulator::merge(self, &other);
    }
}

/// Per-sample statistic folded into an accumulator.
pub trait Reducer: Sync {
    type Acc: Accumulator;

    fn needs(&self) -> Needs;

    fn observe(&self, sample: &Sample<'_>, acc: &mut Self::Acc) -> Result<Outcome, EigenError>;
}

/// Aggregate of a run. `used + censored + failed == n_samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<A> {
    pub acc: A,
    pub n_samples: u64,
    pub used: u64,
    pub censored: u64,
    pub failed: u64,
}

#[derive(Default)]
struct ChunkState<A> {
    acc: A,
    used: u64,
    censored: u64,
    failed: u64,
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Deterministic chunked parallel fold over `0..n_items`.
pub fn par_fold<A, F>(n_items: u64, workers: usize, body: F) -> Result<A>
where
    A: Accumulator,
    F: Fn(u64, &mut A) + Sync,
{
    let n_chunks = n_items.div_ceil(CHUNK);
    let parts: Vec<A> = with_pool(workers, || {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = A::default();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n_items) {
                    body(i, &mut acc);
                }
                acc
            })
            .collect()
    })?;
    let mut total = A::default();
    for p in parts {
        total.merge(p);
    }
    Ok(total)
}

/// Auxiliary generator for sample `index`, independent of the one that drew
/// the matrix.
pub fn aux_rng(master_seed: u64, index: u64) -> rand_chacha::ChaCha8Rng {
    stream_rng(master_seed, index | (1 << 63))
}

/// Spectrum of sample `index` for eigenvalue-only consumers of the GUE
/// tridiagonal sampler.
fn tridiagonal_sample(config: &ExperimentConfig, index: u64) -> Result<SpectralDecomposition, EigenError> {
    let mut rng = stream_rng(config.master_seed, index);
    let (d, e) = sample_gue_tridiagonal(config.n, &mut rng);
    let t = TridiagonalForm { d, e, q: None };
    let dec = tridiagonal_eigen(&t, false)?;
    let trace: f64 = t.d.iter().sum();
    let sum: f64 = dec.eigenvalues.iter().sum();
    let scale = t.norm_bound().max(f64::MIN_POSITIVE);
    let limit = 1e-10 * config.n as f64 * scale;
    if (sum - trace).abs() > limit {
        return Err(EigenError::Certification {
            what: "trace error",
            value: (sum - trace).abs(),
            limit,
        });
    }
    Ok(dec)
}

/// Samples `H` (or its spectrum), applies the reducer, and aggregates.
pub fn run_experiment<R: Reducer>(config: &ExperimentConfig, reducer: &R) -> Result<RunResult<R::Acc>> {
    config.validate_common()?;
    let needs = reducer.needs();
    if config.sampler == Sampler::GueTridiagonal && needs != Needs::Eigenvalues {
        return Err(Error::InvalidArgument(
            "the gue-tridiagonal sampler only provides eigenvalues".into(),
        ));
    }
    let state: ChunkState<R::Acc> = par_fold(config.n_samples, config.workers, |index, st: &mut ChunkState<R::Acc>| {
        let outcome = match config.sampler {
            Sampler::GueTridiagonal => tridiagonal_sample(config, index).and_then(|dec| {
                let sample = Sample {
                    index,
                    matrix: None,
                    spectrum: Some(&dec),
                };
                reducer.observe(&sample, &mut st.acc)
            }),
            Sampler::Dense => {
                let mut rng = stream_rng(config.master_seed, index);
                let h = sample_wigner_with(config.n, &config.spec, &mut rng).expect("n >= 1");
                let dec = match needs {
                    Needs::Matrix => None,
                    Needs::Eigenvalues => Some(eigh(&h, false)),
                    Needs::Eigenvectors => Some(eigh(&h, true)),
                };
                match dec.transpose() {
                    Ok(dec) => {
                        let sample = Sample {
                            index,
                            matrix: Some(&h),
                            spectrum: dec.as_ref(),
                        };
                        reducer.observe(&sample, &mut st.acc)
                    }
                    Err(e) => Err(e),
                }
            }
        };
        match outcome {
            Ok(Outcome::Used) => st.used += 1,
            Ok(Outcome::Censored) => st.censored += 1,
            Err(e) => {
                log::warn!("sample {index} failed: {e}");
                st.failed += 1;
            }
        }
    })?;
    if state.failed as f64 > MAX_FAILURE_RATE * config.n_samples as f64 {
        return Err(Error::FailureRate {
            failed: state.failed,
            total: config.n_samples,
        });
    }
    Ok(RunResult {
        acc: state.acc,
        n_samples: config.n_samples,
        used: state.used,
        censored: state.censored,
        failed: state.failed,
    })
}

impl<A: Accumulator> Accumulator for ChunkState<A> {
    fn merge(&mut self, other: Self) {
        self.acc.merge(other.acc);
        self.used += other.used;
        self.censored += other.censored;
        self.failed += other.failed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{count_in_interval, semicircle_density, SpectralInterval};

    struct CountN {
        interval: SpectralInterval,
    }

    impl Reducer for CountN {
        type Acc = MomentAccumulator;
        fn needs(&self) -> Needs {
            Needs::Eigenvalues
        }
        fn observe(&self, s: &Sample<'_>, acc: &mut MomentAccumulator) -> Result<Outcome, EigenError> {
            acc.push(count_in_interval(&s.spectrum().eigenvalues, self.interval) as f64);
            Ok(Outcome::Used)
        }
    }

    fn config(n: usize, samples: u64) -> ExperimentConfig {
        ExperimentConfig {
            n,
            n_samples: samples,
            master_seed: 31,
            ..Default::default()
        }
    }

    #[test]
    fn single_sample_matches_direct_computation() {
        let cfg = config(16, 1);
        let interval = SpectralInterval::new(0.0, 1.0).unwrap();
        let r = run_experiment(&cfg, &CountN { interval }).unwrap();
        let mut rng = stream_rng(31, 0);
        let h = sample_wigner_with(16, &cfg.spec, &mut rng).unwrap();
        let direct = count_in_interval(&eigh(&h, false).unwrap().eigenvalues, interval);
        assert_eq!(r.acc.sum, direct as f64);
        assert_eq!(r.used, 1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let interval = SpectralInterval::new(0.1, 0.3).unwrap();
        let mut cfg = config(24, 200);
        cfg.workers = 1;
        let a = run_experiment(&cfg, &CountN { interval }).unwrap();
        cfg.workers = 8;
        let b = run_experiment(&cfg, &CountN { interval }).unwrap();
        assert_eq!(a.acc.sum.to_bits(), b.acc.sum.to_bits());
        assert_eq!(a.acc.sum_sq.to_bits(), b.acc.sum_sq.to_bits());
    }

    #[test]
    fn mean_count_matches_semicircle_density() {
        let n = 256;
        let interval = SpectralInterval::new(0.0, 1.0 / n as f64).unwrap();
        let cfg = ExperimentConfig {
            sampler: Sampler::GueTridiagonal,
            ..config(n, 1000)
        };
        let r = run_experiment(&cfg, &CountN { interval }).unwrap();
        let want = semicircle_density(0.0);
        assert!((r.acc.mean() - want).abs() < 0.2 * want, "{}", r.acc.mean());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = config(8, 10);
        cfg.energy = 1.6;
        assert!(cfg.validate().is_err());
        let mut cfg = config(8, 10);
        cfg.grid = vec![0.2, 0.1];
        assert!(cfg.validate().is_err());
        let mut cfg = config(8, 10);
        cfg.k = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(8, 10);
        cfg.spec.family = crate::ensemble::OffDiagonalFamily::RadialUniform;
        cfg.sampler = Sampler::GueTridiagonal;
        assert!(cfg.validate().is_err());
    }

    struct Failing;

    impl Reducer for Failing {
        type Acc = Vec<u64>;
        fn needs(&self) -> Needs {
            Needs::Matrix
        }
        fn observe(&self, s: &Sample<'_>, _: &mut Vec<u64>) -> Result<Outcome, EigenError> {
            match s.index {
                3 => Err(EigenError::NoConvergence { index: 0, iterations: 1 }),
                4 | 5 => Ok(Outcome::Censored),
                _ => Ok(Outcome::Used),
            }
        }
    }

    #[test]
    fn failures_are_counted_and_abort_above_threshold() {
        let err = run_experiment(&config(4, 100), &Failing).unwrap_err();
        assert!(matches!(err, Error::FailureRate { failed: 1, total: 100 }));
        let r = run_experiment(&config(4, 2000), &Failing).unwrap();
        assert_eq!(r.failed, 1);
        assert_eq!(r.censored, 2);
        assert_eq!(r.used + r.censored + r.failed, r.n_samples);
    }
}
