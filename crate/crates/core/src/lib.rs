//! Anomaly detection with Gaussian mixtures and a discriminative boundary.
//!
//! A mixture is fitted to normal data by EM ([`gmm`]). Every sample is then
//! mapped to the vector of its component densities ([`featmap`]), and a
//! one-class SVM is trained on those vectors ([`ocsvm`]). The resulting
//! detector ([`detector::DigmmModel`]) labels `x` normal iff
//! `⟨w*, p(x)⟩ − ρ* > 0`. The plain density-threshold detector
//! ([`detector::ThresholdGmmModel`]) is provided for comparison.
//!
//! The numerical core is generic over [`Float`] (`f32` or `f64`); the
//! aliases below fix the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dataio;
pub mod detector;
pub mod error;
pub mod eval;
pub mod featmap;
pub mod float;
pub mod gaussian;
pub mod gmm;
pub mod linalg;
pub mod ocsvm;

pub use dataio::{Dataset, Label};
pub use detector::{
    fit_digmm, fit_digmm_with, fit_threshold_gmm, AnyModel, Detector, DigmmConfig, DigmmModel,
    ThresholdGmmModel, Verdict,
};
pub use error::{Error, Result};
pub use float::Float;
pub use gaussian::GaussianComponent;
pub use gmm::{fit_em, fit_em_restarts, EmConfig, EmTrace, GmmParams};
pub use linalg::Matrix;

pub type Matrix64 = Matrix<f64>;
pub type Dataset64 = Dataset<f64>;
pub type GaussianComponent64 = GaussianComponent<f64>;
pub type GmmParams64 = GmmParams<f64>;
pub type DigmmModel64 = DigmmModel<f64>;
pub type ThresholdGmmModel64 = ThresholdGmmModel<f64>;
pub type AnyModel64 = AnyModel<f64>;

pub type Matrix32 = Matrix<f32>;
pub type Dataset32 = Dataset<f32>;
pub type GaussianComponent32 = GaussianComponent<f32>;
pub type GmmParams32 = GmmParams<f32>;
pub type DigmmModel32 = DigmmModel<f32>;
pub type ThresholdGmmModel32 = ThresholdGmmModel<f32>;
pub type AnyModel32 = AnyModel<f32>;

/// Independent RNG stream seed for `(seed, stream)` via the SplitMix64
/// finalizer.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
