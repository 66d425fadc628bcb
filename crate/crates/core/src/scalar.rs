//! Scalar abstraction shared by the image, mask, compositing and filter code.
//!
//! Everything numeric in the crate is written against [`Scalar`], so the same
//! code runs in `f32` (half the memory for large batches) or `f64` (the
//! default used by the pipeline).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from a small integer or literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal out of range")
    }

    #[inline]
    fn from_usize_exact(v: usize) -> Self {
        Self::from_usize(v).expect("integer not representable")
    }

    /// Clamp into `[0, 1]`. NaN maps to 0.
    #[inline]
    fn clamp_unit(self) -> Self {
        if self.is_nan() {
            Self::zero()
        } else {
            self.max(Self::zero()).min(Self::one())
        }
    }

    /// Round half to even.
    #[inline]
    fn round_half_even(self) -> Self {
        let r = self.round();
        let two = Self::one() + Self::one();
        if (self - self.trunc()).abs() == Self::lit(0.5) && r % two != Self::zero() {
            r - self.signum()
        } else {
            r
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convex combination `x * w + y * (1 - w)`, kept inside `[min(x, y), max(x, y)]`.
///
/// With `w == 1` the result is exactly `x`; with `w == 0` exactly `y`.
#[inline]
pub fn blend<T: Scalar>(x: T, y: T, w: T) -> T {
    let v = x * w + y * (T::one() - w);
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    v.max(lo).min(hi)
}

/// Quantize a unit-range value to 8 bits with round-half-to-even.
#[inline]
pub fn quantize_u8<T: Scalar>(v: T) -> u8 {
    let scaled = (v.clamp_unit() * T::lit(255.0)).round_half_even();
    scaled.to_u8().unwrap_or(0)
}
