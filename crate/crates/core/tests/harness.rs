//! Sampler equivalence and worker-count determinism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wigner_lab::eigen::{eigh, tridiagonal_eigen, TridiagonalForm};
use wigner_lab::ensemble::{sample_gue_tridiagonal, sample_wigner_with, EntryDistributionSpec};
use wigner_lab::mc::experiments::{self, Report};
use wigner_lab::mc::identities::identity_suite;
use wigner_lab::mc::{ExperimentConfig, Sampler};
use wigner_lab::spectral::SpectralInterval;

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn tridiagonal_sampler_matches_dense_gue() {
    let n = 24;
    let reps = 3000;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let spec = EntryDistributionSpec::gue();
    let mut dense: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut tri: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let picks = [0, n / 2, n - 1];
    for _ in 0..reps {
        let h = sample_wigner_with(n, &spec, &mut rng).unwrap();
        let a = eigh(&h, false).unwrap().eigenvalues;
        let (d, e) = sample_gue_tridiagonal(n, &mut rng);
        let b = tridiagonal_eigen(&TridiagonalForm { d, e, q: None }, false)
            .unwrap()
            .eigenvalues;
        for (slot, &p) in picks.iter().enumerate() {
            dense[slot].push(a[p]);
            tri[slot].push(b[p]);
        }
    }
    // Two-sample KS critical value at level 1e-3: 1.95 sqrt(2 / reps).
    let crit = 1.95 * (2.0 / reps as f64).sqrt();
    for slot in 0..3 {
        let d = ks_statistic(dense[slot].clone(), tri[slot].clone());
        assert!(d < crit, "eigenvalue {}: KS {d} >= {crit}", picks[slot]);
    }
}

fn csvs(r: &dyn Report) -> Vec<String> {
    r.tables().iter().map(|t| t.to_csv()).collect()
}

#[test]
fn results_independent_of_worker_count() {
    let base = ExperimentConfig {
        n: 24,
        n_samples: 150,
        master_seed: 12,
        ..Default::default()
    };
    let run = |workers: usize| -> Vec<Vec<String>> {
        let cfg = ExperimentConfig { workers, ..base.clone() };
        let tri = ExperimentConfig {
            sampler: Sampler::GueTridiagonal,
            ..cfg.clone()
        };
        let window = SpectralInterval::new(0.0, 0.5).unwrap();
        vec![
            csvs(&experiments::semicircle_concentration(&cfg).unwrap()),
            csvs(&experiments::wegner_moments(&tri, 3.0).unwrap()),
            csvs(&experiments::repulsion_fit(&cfg).unwrap()),
            csvs(&experiments::gap_tail(&tri).unwrap()),
            csvs(&experiments::delocalization_stats(&cfg, window, 4.0).unwrap()),
            csvs(&experiments::xi_lower_tail(&cfg, 3).unwrap()),
            csvs(&experiments::concentration(&cfg, 0.1).unwrap()),
            csvs(&identity_suite(&ExperimentConfig { n: 8, n_samples: 40, ..cfg.clone() }, 0.1).unwrap()),
        ]
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn bookkeeping_adds_up() {
    let cfg = ExperimentConfig {
        n: 6,
        n_samples: 500,
        master_seed: 3,
        energy: 1.2,
        kappa: 0.2,
        ..Default::default()
    };
    let r = experiments::gap_tail(&cfg).unwrap();
    assert!(r.run.censored > 0);
    assert_eq!(r.run.used + r.run.censored + r.run.failed, r.run.n_samples);
    let window = SpectralInterval::new(1.2, 0.05).unwrap();
    let d = experiments::delocalization_stats(&cfg, window, 2.0).unwrap();
    assert_eq!(d.run.used + d.run.censored + d.run.failed, d.run.n_samples);
}
