//! Rough timings for sampling and diagonalization at a few sizes.

use std::time::Instant;

use wigner_lab::eigen::{eigh, eigvalsh};
use wigner_lab::ensemble::{sample_wigner, EntryDistributionSpec};

fn main() {
    let spec = EntryDistributionSpec::gue();
    for (n, reps) in [(64, 200), (128, 100), (256, 30), (512, 5)] {
        let t = Instant::now();
        let hs: Vec<_> = (0..reps).map(|s| sample_wigner(n, &spec, s as u64).unwrap()).collect();
        let sample = t.elapsed().as_secs_f64() / reps as f64;

        let t = Instant::now();
        for h in &hs {
            eigvalsh(h).unwrap();
        }
        let values = t.elapsed().as_secs_f64() / reps as f64;

        let with_vectors = reps / 4 + 1;
        let t = Instant::now();
        for h in hs.iter().take(with_vectors) {
            eigh(h, true).unwrap();
        }
        let vectors = t.elapsed().as_secs_f64() / with_vectors as f64;

        println!(
            "n={n}: sample {:.2} ms, values {:.2} ms, vectors {:.2} ms",
            sample * 1e3,
            values * 1e3,
            vectors * 1e3
        );
    }
}
