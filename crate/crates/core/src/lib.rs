//! Reduced-order modeling toolkit for time-dependent parametric PDEs.
//!
//! The crate contains the full-order finite element solvers used to generate
//! training data, a POD/Galerkin reduced basis, a convolutional autoencoder
//! surrogate (DL-ROM) built on a small reverse-mode network engine, and the
//! classification-based composition (MC-ROM) in which an RBF support vector
//! machine routes each `(t, μ)` query to a subnet trained on one band of
//! solution magnitudes.

pub mod dataset;
pub mod dlrom;
pub mod fom;
pub mod linalg;
pub mod mcrom;
pub mod metrics;
pub mod nn;
pub mod pod;
pub mod svm;

mod error;

pub use error::{Error, Result};
