//! # kernlin
//!
//! Kernel linearization for two kernels on real-valued data:
//!
//! * the generalized min-max (GMM) kernel, computed on a sign-split
//!   nonnegative image of each vector, and hashed with generalized consistent
//!   weighted sampling (GCWS) into sparse one-hot features;
//! * the RBF kernel `exp(-gamma (1 - rho))` in correlation form, hashed with
//!   random Fourier features, optionally normalized (NRFF).
//!
//! Alongside the hashing schemes the crate carries the closed-form variances
//! of the resulting estimators, a Monte Carlo harness that checks them, LIBSVM
//! text I/O, and a small SGD linear classifier for end-to-end accuracy checks.
//!
//! All randomness is counter-based ([`rng`]): results depend only on the
//! master seed, never on iteration order or thread count.

pub mod dataio;
pub mod error;
pub mod gcws_hash;
pub mod kernels;
pub mod linear_model;
pub mod montecarlo;
pub mod rff_hash;
pub mod rng;
pub mod synth;
pub mod variance_theory;
pub mod vectors;

pub use error::{Error, Result};
pub use gcws_hash::{encode, estimate_gmm, sketch, GcwsConfig, GcwsSketch, MatchMode};
pub use kernels::{gmm, kernel_matrix, rbf, KernelKind, KernelMatrix, RbfParams};
pub use rff_hash::{estimate_rbf, rff_features, RffConfig, RffFeatures};
pub use vectors::{
    correlation, l2_normalize, transform, CenterVector, DenseVector, SparseVector, TransformedVector, VectorView,
};
