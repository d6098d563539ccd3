//! Multivariate Gaussian components evaluated in log-space through a cached
//! Cholesky factor.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::Matrix;

/// Multiplier applied to the jitter at each failed factorization attempt.
pub const JITTER_GROWTH: f64 = 10.0;
/// Upper bound on the jitter, relative to the mean diagonal of the matrix.
pub const JITTER_CAP_RELATIVE: f64 = 1e-3;
/// First nonzero jitter tried when the caller passes zero, relative to the
/// mean diagonal.
pub const JITTER_START_RELATIVE: f64 = 1e-10;

const SYMMETRY_RTOL: f64 = 1e-12;

/// Factorizes `covariance + jitter * I` as `L * L^T`.
///
/// If the factorization fails, the jitter is multiplied by ten until it
/// exceeds `1e-3` times the mean diagonal.
pub fn cholesky_factor<F: Float>(covariance: &Matrix<F>, jitter: F) -> Result<Matrix<F>> {
    cholesky_with_jitter(covariance, jitter).map(|(l, _)| l)
}

/// Same as [`cholesky_factor`] but also reports the jitter that succeeded.
pub fn cholesky_with_jitter<F: Float>(covariance: &Matrix<F>, jitter: F) -> Result<(Matrix<F>, F)> {
    if !covariance.is_square() {
        return Err(Error::DimensionMismatch {
            expected: covariance.rows(),
            actual: covariance.cols(),
        });
    }
    if jitter < F::zero() || !jitter.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "jitter must be finite and nonnegative, got {jitter}"
        )));
    }
    let asym = covariance.max_asymmetry();
    let scale = covariance.max_abs().max(F::min_positive_value());
    if !covariance.all_finite() || asym > F::tol(SYMMETRY_RTOL) * scale {
        return Err(Error::NonSymmetric {
            asymmetry: asym.widen(),
        });
    }

    let d = covariance.rows();
    let mean_diag = if d == 0 {
        F::one()
    } else {
        covariance.trace() / F::lit(d as f64)
    };
    let cap = F::lit(JITTER_CAP_RELATIVE) * mean_diag;

    let mut current = jitter;
    loop {
        if let Some(l) = try_cholesky(covariance, current) {
            return Ok((l, current));
        }
        if !(mean_diag > F::zero()) {
            return Err(Error::NotPositiveDefinite {
                jitter: current.widen(),
            });
        }
        let next = if current == F::zero() {
            F::lit(JITTER_START_RELATIVE) * mean_diag
        } else {
            current * F::lit(JITTER_GROWTH)
        };
        if next > cap {
            // one last attempt exactly at the cap
            if current < cap {
                if let Some(l) = try_cholesky(covariance, cap) {
                    return Ok((l, cap));
                }
            }
            return Err(Error::NotPositiveDefinite {
                jitter: cap.widen(),
            });
        }
        current = next;
    }
}

fn try_cholesky<F: Float>(a: &Matrix<F>, jitter: F) -> Option<Matrix<F>> {
    let d = a.rows();
    let mut l = Matrix::zeros(d, d);
    for j in 0..d {
        let mut diag = a[(j, j)] + jitter;
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > F::zero()) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L y = b` for lower-triangular `L`, returning `‖y‖²`.
fn forward_solve_sq_norm<F: Float>(l: &Matrix<F>, b: &mut [F]) -> F {
    let d = l.rows();
    let mut norm = F::zero();
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        let y = s / l[(i, i)];
        b[i] = y;
        norm += y * y;
    }
    norm
}

/// One Gaussian component `N(mean, covariance)`.
///
/// Immutable after construction. The stored covariance already includes any
/// jitter needed to factorize it, so `chol * chol^T` reconstructs it.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<F> {
    mean: Vec<F>,
    covariance: Matrix<F>,
    chol: Matrix<F>,
    log_norm_const: F,
}

impl<F: Float> GaussianComponent<F> {
    pub fn new(mean: Vec<F>, covariance: Matrix<F>) -> Result<Self> {
        Self::with_jitter(mean, covariance, F::zero())
    }

    pub fn with_jitter(mean: Vec<F>, covariance: Matrix<F>, jitter: F) -> Result<Self> {
        let d = mean.len();
        if covariance.rows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: covariance.rows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "mean has non-finite entries".into(),
            ));
        }
        let (chol, used) = cholesky_with_jitter(&covariance, jitter)?;
        let mut covariance = covariance;
        if used > F::zero() {
            for i in 0..d {
                covariance[(i, i)] += used;
            }
        }
        // symmetrize exactly so the stored matrix is bitwise symmetric
        for i in 0..d {
            for j in (i + 1)..d {
                let s = (covariance[(i, j)] + covariance[(j, i)]) / F::lit(2.0);
                covariance[(i, j)] = s;
                covariance[(j, i)] = s;
            }
        }
        let half_log_det: F = (0..d).map(|i| chol[(i, i)].ln()).sum();
        let log_norm_const = -F::lit(d as f64 / 2.0) * (F::lit(2.0) * F::PI()).ln() - half_log_det;
        Ok(Self {
            mean,
            covariance,
            chol,
            log_norm_const,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(vec![F::zero(); d], Matrix::identity(d)).expect("identity is positive definite")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[F] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix<F> {
        &self.covariance
    }

    pub fn chol(&self) -> &Matrix<F> {
        &self.chol
    }

    /// `-(d/2) log(2π) - ½ log det Σ`, the log-density at the mean.
    pub fn log_norm_const(&self) -> F {
        self.log_norm_const
    }

    /// Squared Mahalanobis distance `(x-μ)^T Σ^{-1} (x-μ)`.
    pub fn mahalanobis_sq(&self, x: &[F]) -> Result<F> {
        self.check_dim(x)?;
        let mut diff: Vec<F> = x.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        Ok(forward_solve_sq_norm(&self.chol, &mut diff))
    }

    pub fn log_pdf(&self, x: &[F]) -> Result<F> {
        Ok(self.log_norm_const - F::lit(0.5) * self.mahalanobis_sq(x)?)
    }

    /// Draws `count` samples as rows of a `count × d` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Matrix<F> {
        let d = self.dim();
        let mut out = Matrix::zeros(count, d);
        let mut z = vec![F::zero(); d];
        for r in 0..count {
            self.sample_into(rng, &mut z, out.row_mut(r));
        }
        out
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [F], out: &mut [F]) {
        let d = self.dim();
        for v in z.iter_mut() {
            let s: f64 = rng.sample(StandardNormal);
            *v = F::lit(s);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for k in 0..=i {
                acc += self.chol[(i, k)] * z[k];
            }
            out[i] = acc;
        }
    }

    fn check_dim(&self, x: &[F]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LOG_INV_2PI: f64 = -1.8378770664093453;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix<f64> {
        Matrix::from_row_major(2, 2, vec![a, b, c, d])
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky_factor(&Matrix::<f64>::identity(2), 0.0).unwrap();
        assert_eq!(l, Matrix::identity(2));
        let l = cholesky_factor(&m2(4.0, 0.0, 0.0, 9.0), 0.0).unwrap();
        assert_eq!(l.as_slice(), &[2.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn cholesky_closed_form_2x2() {
        // closed form: l11 = sqrt(a), l21 = b / l11, l22 = sqrt(c - l21^2)
        let (a, b, c) = (2.0f64, 1.0, 2.0);
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).sqrt();
        let l = cholesky_factor(&m2(a, b, b, c), 0.0).unwrap();
        assert!((l[(0, 0)] - l11).abs() < 1e-15);
        assert!((l[(1, 0)] - l21).abs() < 1e-15);
        assert!((l[(1, 1)] - l22).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        let rec = l.matmul(&l.transpose());
        assert!(rec.sub(&m2(2.0, 1.0, 1.0, 2.0)).max_abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let err = cholesky_factor(&m2(1.0, 0.5, 0.4, 1.0), 0.0).unwrap_err();
        assert!(matches!(err, Error::NonSymmetric { .. }));
    }

    #[test]
    fn cholesky_jitter_rescues_singular_matrix() {
        // rank-one, PSD but singular
        let a = m2(1.0, 1.0, 1.0, 1.0);
        let (l, used) = cholesky_with_jitter(&a, 0.0).unwrap();
        assert!(used > 0.0 && used <= 1e-3);
        let rec = l.matmul(&l.transpose());
        let mut target = a.clone();
        target[(0, 0)] += used;
        target[(1, 1)] += used;
        assert!(rec.sub(&target).max_abs() < 1e-12);
    }

    #[test]
    fn cholesky_fails_past_cap() {
        let err = cholesky_factor(&m2(1.0, 0.0, 0.0, -1.0), 0.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        let err = cholesky_factor(&m2(1.0, 2.0, 2.0, 1.0), 0.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn log_pdf_standard_normal() {
        let g = GaussianComponent::<f64>::standard(2);
        assert!((g.log_pdf(&[0.0, 0.0]).unwrap() - LOG_INV_2PI).abs() < 1e-12);
        assert!((g.log_pdf(&[1.0, 0.0]).unwrap() - (LOG_INV_2PI - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_matches_explicit_inverse_oracle() {
        let mu = [1.0, 1.0];
        let (a, b, c) = (2.0f64, 1.0, 2.0);
        let det = a * c - b * b;
        let inv = [c / det, -b / det, -b / det, a / det];
        let x = [0.0, 0.0];
        let dx = [x[0] - mu[0], x[1] - mu[1]];
        let q =
            dx[0] * (inv[0] * dx[0] + inv[1] * dx[1]) + dx[1] * (inv[2] * dx[0] + inv[3] * dx[1]);
        let oracle = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());

        let g = GaussianComponent::new(mu.to_vec(), m2(a, b, b, c)).unwrap();
        let got = g.log_pdf(&x).unwrap();
        assert!(
            (got - oracle.ln()).abs() < 1e-12,
            "{got} vs {}",
            oracle.ln()
        );
    }

    #[test]
    fn log_pdf_dimension_mismatch() {
        let g = GaussianComponent::<f64>::standard(2);
        assert!(matches!(
            g.log_pdf(&[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn log_pdf_finite_far_away() {
        let g = GaussianComponent::<f64>::standard(2);
        let v = g.log_pdf(&[1e6, -1e6]).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GaussianComponent::new(vec![5.0, 5.0], Matrix::identity(2)).unwrap();
        let s = g.sample(10_000, &mut rng);
        for j in 0..2 {
            let mean: f64 = s.iter_rows().map(|r| r[j]).sum::<f64>() / 10_000.0;
            assert!((mean - 5.0).abs() < 0.1);
        }

        let g = GaussianComponent::new(vec![0.0, 0.0], m2(4.0, 0.0, 0.0, 1.0)).unwrap();
        let s = g.sample(10_000, &mut rng);
        for (j, want) in [4.0, 1.0].into_iter().enumerate() {
            let mean: f64 = s.iter_rows().map(|r| r[j]).sum::<f64>() / 10_000.0;
            let var: f64 = s.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 9_999.0;
            assert!((var - want).abs() < 0.1 * want, "var {var} want {want}");
        }
    }

    #[test]
    fn sample_deterministic() {
        let g = GaussianComponent::<f64>::standard(3);
        let a = g.sample(1, &mut ChaCha8Rng::seed_from_u64(11));
        let b = g.sample(1, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn density_integrates_to_one_1d() {
        let g = GaussianComponent::new(vec![0.3], Matrix::from_diag(&[0.7])).unwrap();
        let h = 0.001;
        let total: f64 = (0..20_000)
            .map(|i| -10.0 + (i as f64 + 0.5) * h)
            .map(|x| g.log_pdf(&[x]).unwrap().exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn mode_and_isotropy() {
        let g = GaussianComponent::<f64>::standard(2);
        let at_mode = g.log_pdf(&[0.0, 0.0]).unwrap();
        let r = 1.7f64;
        let mut vals = vec![];
        for k in 0..16 {
            let t = k as f64 * std::f64::consts::PI / 8.0;
            let v = g.log_pdf(&[r * t.cos(), r * t.sin()]).unwrap();
            assert!(v < at_mode);
            vals.push(v);
        }
        for v in &vals {
            assert!((v - vals[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn works_in_f32() {
        let g = GaussianComponent::<f32>::standard(2);
        let v = g.log_pdf(&[0.0, 0.0]).unwrap();
        assert!((v as f64 - LOG_INV_2PI).abs() < 1e-6);
    }
}
