//! Spectral statistics laboratory for Hermitian Wigner matrices.
//!
//! The crate samples Wigner ensembles, diagonalizes them with a dense
//! Householder + implicit QL eigensolver, evaluates Stieltjes transforms and
//! counting functions, and runs seeded Monte Carlo experiments on local
//! eigenvalue statistics (local semicircle law, Wegner estimate, level
//! repulsion, gap tails, eigenvector delocalization).
//!
//! Module map:
//!
//! * [`ensemble`]: entry distributions, matrix sampling, minors.
//! * [`eigen`]: tridiagonalization, QL iteration, certified decompositions.
//! * [`spectral`]: Stieltjes transforms, semicircle law, resolvent identities.
//! * [`mc`]: parallel deterministic Monte Carlo harness and experiments.
//! * [`cli`]: command-line front end.

pub mod cli;
pub mod eigen;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod spectral;

pub use num_complex::Complex64;

pub use crate::eigen::{eigh, SpectralDecomposition, TridiagonalForm};
pub use crate::ensemble::{
    sample_wigner, DiagonalFamily, EntryDistributionSpec, HermitianMatrix, MinorDecomposition,
    OffDiagonalFamily,
};
pub use crate::error::{EigenError, Error, Result};
pub use crate::spectral::{SpectralInterval, SpectralPoint};

