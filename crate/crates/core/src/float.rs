use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Random draws and high-precision
/// accumulations are routed through `f64` so both widths share one code path.
pub trait Float:
    num_traits::Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self;

    /// Widens to `f64` for accumulation and serialization.
    fn widen(self) -> f64;

    /// Tolerance floor used where a fixed absolute threshold would be
    /// below the type's resolution.
    fn tol(x: f64) -> Self {
        Self::lit(x.max(16.0 * Self::epsilon().widen()))
    }
}

impl Float for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

/// `log(exp(a_1) + ... + exp(a_k))` without overflow. Returns `-inf` when
/// every term is `-inf` or the slice is empty.
pub fn log_sum_exp<F: Float>(terms: &[F]) -> F {
    let max = terms
        .iter()
        .copied()
        .fold(F::neg_infinity(), |acc, v| if v > acc { v } else { acc });
    if max == F::neg_infinity() {
        return max;
    }
    let mut acc = F::zero();
    for &t in terms {
        acc += (t - max).exp();
    }
    max + acc.ln()
}

/// Dot product accumulated in `f64`, in index order.
pub fn dot_wide<F: Float>(a: &[F], b: &[F]) -> F {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x.widen() * y.widen();
    }
    F::lit(acc)
}
