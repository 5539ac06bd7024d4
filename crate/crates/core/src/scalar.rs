//! Scalar abstraction shared by the analytic modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the state and cavity algebra is written against.
///
/// Implemented for `f32` and `f64`. Tolerance defaults scale with the
/// precision of the type.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
    /// Normalization tolerance used when flagging a state as normalized.
    fn norm_tolerance() -> Self;

    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }
}

impl Real for f64 {
    #[inline]
    fn norm_tolerance() -> Self {
        1e-12
    }
}

impl Real for f32 {
    #[inline]
    fn norm_tolerance() -> Self {
        1e-5
    }
}
