//! Region-based classification of polarimetric SAR covariance imagery with
//! closed-form stochastic distances between scaled complex Wishart models.
//!
//! The crate covers the full pipeline: Hermitian matrix arithmetic, the
//! Wishart model and its sampler, five stochastic distances, the τ-shifted
//! metric and exponential kernel, an SMO solver on precomputed Gram matrices
//! with one-against-all and one-against-one strategies, minimum-distance and
//! SVM region classifiers, a phantom-scene simulator and accuracy assessment.

// `!(x > 0.0)` is used on purpose so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classify;
pub mod distances;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod hermitian;
pub mod io;
pub mod kernels;
pub mod quadrature;
pub mod raster;
pub mod reference;
pub mod simulate;
pub mod svm;
pub mod wishart;

pub use error::{Error, Result};
