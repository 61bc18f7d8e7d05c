//! Scalar abstraction shared by the numeric modules.
//!
//! Geometry, trajectory processing, scoring and the position-embedding kernel
//! are written against [`Scalar`] so they run in either `f32` or `f64`. The
//! serialized data model (episodes, samples, reports) is fixed to `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Lossy conversion to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Converts a count or index.
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Rounds half away from zero, the pixel rounding rule used everywhere.
#[inline]
pub fn round_half_away<T: Scalar>(v: T) -> T {
    // `Float::round` already rounds half-way cases away from zero.
    v.round()
}
