//! Floating point scalar abstraction shared by every numerical routine.

use nalgebra as na;
use num_traits as nt;
use std::fmt::{Debug, Display, LowerExp};

/// Real scalar type the estimator is generic over: `f32` or `f64`.
///
/// Linear algebra goes through nalgebra, so `RealField` supplies the
/// arithmetic; the num-traits conversions are used for literals and for
/// serialization, which always happens in `f64`.
pub trait Scalar:
    na::RealField
    + Copy
    + nt::FromPrimitive
    + nt::ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Converts from a count.
    fn from_count(n: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon.
    fn eps() -> Self;
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}
