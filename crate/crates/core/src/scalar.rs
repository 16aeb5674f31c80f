//! Floating-point scalar abstraction used by the network algebra.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type a [`Network`](crate::relu::Network) can be built over.
///
/// Implemented for `f32` and `f64`. All tolerances quoted in this crate
/// refer to `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// The rectifier `max(t, 0)`. NaN passes through unchanged.
    #[inline]
    fn relu(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else {
            self
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
