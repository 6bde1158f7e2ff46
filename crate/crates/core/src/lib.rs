//! Sparsified compressed sensing toolkit.
//!
//! Builds random sensing matrices, sparsifies them with exact-count
//! per-column masks, generates k-sparse unit-norm signals, and measures
//! recovery with three algorithms: nonnegative l1-minimization solved by an
//! in-crate revised simplex method, orthogonal matching pursuit, and
//! compressive sampling matching pursuit. A Monte Carlo harness estimates
//! recovery-rate curves and adaptive recovery thresholds, and writes
//! reproducible CSV artifacts.

pub mod error;
pub mod harness;
pub mod lpsolve;
pub mod matgen;
pub mod numkit;
pub mod recover;
pub mod rng;
pub mod siggen;
pub mod sparsifier;
pub mod threshold;

pub use error::{Error, Result};
pub use matgen::{DenseMatrix, EnsembleKind, EnsembleSpec};
pub use numkit::ColumnSparseMatrix;
pub use recover::{Algo, RecoveryOutcome};
pub use rng::Seed;
pub use siggen::{SignalDist, SparseSignal};
pub use sparsifier::{Mask, SparsifiedMatrix};
pub use threshold::ThresholdEstimate;
