//! Floating-point scalar abstraction shared by the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used by plants, operators, certificates and the simulator.
///
/// Implemented for `f32` and `f64`. Constants written as `f64` literals are
/// brought into the scalar type with [`cast`].
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance used for feasibility and range checks, scaled to the type's precision.
    fn feasibility_tol() -> Self;
}

impl Scalar for f32 {
    fn feasibility_tol() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn feasibility_tol() -> Self {
        1e-9
    }
}

/// Converts an `f64` constant into `S`.
#[inline]
pub fn cast<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("f64 constant representable in scalar type")
}

/// Converts a count into `S`.
#[inline]
pub fn from_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<S: Scalar>(v: S) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
