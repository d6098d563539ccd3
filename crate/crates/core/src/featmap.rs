//! Component-density feature map `x ↦ (p_1(x), …, p_m(x))` and its Gram
//! matrix.
//!
//! Every coordinate is a density, so feature vectors live in the closed
//! nonnegative orthant: inner products are nonnegative and any two nonzero
//! vectors meet at an angle between 0° and 90°. Points far from every
//! component map to (or underflow exactly onto) the origin.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::float::{dot_wide, Float};
use crate::gmm::GmmParams;
use crate::linalg::Matrix;

/// How component densities are turned into feature coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScaling {
    /// Raw densities `p_j(x)`.
    #[default]
    Raw,
    /// `p_j(x) / p_j(μ_j)`, so every coordinate lies in `[0, 1]`. Opt-in, for
    /// mixtures whose covariance determinants differ by many orders of
    /// magnitude.
    PeakNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<F>(Vec<F>);

impl<F: Float> FeatureVector<F> {
    pub fn new(values: Vec<F>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[F] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &[F]) -> F {
        dot_wide(&self.0, other)
    }

    pub fn norm(&self) -> F {
        self.dot(&self.0).sqrt()
    }

    /// All coordinates underflowed to zero.
    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&v| v == F::zero())
    }

    /// Cosine of the angle to `other`; `None` if either vector is zero.
    pub fn cosine(&self, other: &Self) -> Option<F> {
        // rescale first so nearly underflowed vectors keep their precision
        let unit = |v: &[F]| -> Option<Vec<f64>> {
            let top = v.iter().fold(0.0f64, |acc, x| acc.max(x.widen().abs()));
            (top > 0.0).then(|| v.iter().map(|x| x.widen() / top).collect())
        };
        let (a, b) = (unit(&self.0)?, unit(&other.0)?);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(F::lit(dot / (na * nb)))
    }
}

/// Raw feature vector: entry `j` is `exp(log p_j(x))`. Entries underflow to
/// exactly zero far from a component.
pub fn feature_vector<F: Float>(params: &GmmParams<F>, x: &[F]) -> Result<FeatureVector<F>> {
    feature_vector_scaled(params, x, FeatureScaling::Raw)
}

pub fn feature_vector_scaled<F: Float>(
    params: &GmmParams<F>,
    x: &[F],
    scaling: FeatureScaling,
) -> Result<FeatureVector<F>> {
    if x.len() != params.d() {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            actual: x.len(),
        });
    }
    params
        .components()
        .iter()
        .map(|c| {
            let lp = c.log_pdf(x)?;
            Ok(match scaling {
                FeatureScaling::Raw => lp.exp(),
                FeatureScaling::PeakNormalized => (lp - c.log_norm_const()).exp(),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(FeatureVector)
}

/// Feature vectors of every row of `data`, in row order.
pub fn feature_matrix<F: Float>(
    params: &GmmParams<F>,
    data: &Dataset<F>,
    scaling: FeatureScaling,
) -> Result<Vec<FeatureVector<F>>> {
    data.points()
        .iter_rows()
        .map(|x| feature_vector_scaled(params, x, scaling))
        .collect()
}

/// `G[i][k] = ⟨p(x_i), p(x_k)⟩`, accumulated in `f64`. Only the lower
/// triangle is computed; the upper is mirrored so the result is exactly
/// symmetric.
pub fn gram_matrix<F: Float>(features: &[FeatureVector<F>]) -> Result<Matrix<F>> {
    let n = features.len();
    let m = features.first().map_or(0, FeatureVector::len);
    if let Some(bad) = features.iter().find(|f| f.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for k in 0..=i {
            let v = features[i].dot(features[k].values());
            g[(i, k)] = v;
            g[(k, i)] = v;
        }
    }
    Ok(g)
}
