//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the tracker, geometry and conflict code are generic over.
///
/// Implemented for `f32` and `f64`. Geodesic math wants `f64`; `f32` is
/// usable for tracking where pixel precision is enough.
pub trait Scalar:
    Float
    + FloatConst
    + NumCast
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64` constants.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize(v: usize) -> Self {
        <Self as NumCast>::from(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
