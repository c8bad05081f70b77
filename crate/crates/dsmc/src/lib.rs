//! Multi-view spectral clustering with double self-weighting.
//!
//! The pipeline clusters `p` instances observed through `n` feature views:
//!
//! 1. [`graph`] builds a Gaussian affinity graph and normalized Laplacian per
//!    view and extracts a k-dimensional spectral embedding F.
//! 2. [`solver`] aligns the embeddings to a shared consensus indicator Y with
//!    an alternating-direction scheme. Each view carries an orthogonal
//!    alignment R, a nonnegative entry-weight matrix M (columns on the
//!    probability simplex), and a scalar view weight w; both weight levels are
//!    re-estimated from residuals every iteration, which is what lets noisy
//!    entries and whole noisy views fade out of the consensus.
//! 3. [`labeling`] rounds the relaxed consensus to hard labels (k-means or
//!    row argmax), and [`metrics`] scores them (ACC, NMI, Purity).
//!
//! [`dataset`] handles CSV I/O and synthetic benchmark generation; [`cli`]
//! wires everything into the `dsmc` batch binary.
//!
//! Everything is deterministic for a fixed seed: the solver itself is
//! seed-free, and all randomness (synthetic data, k-means restarts) flows
//! through counter-derived ChaCha streams.

pub mod cli;
pub mod dataset;
mod error;
pub mod graph;
pub mod labeling;
pub mod metrics;
pub mod solver;

pub use error::{Error, Result};
