//! Scalar abstraction: all estimator math is generic over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64` via the blanket impl below; statistical
/// pipelines normally run in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an `f64` literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal representable in scalar type")
    }

    /// Lossy conversion to `f64` (exact for `f64` itself).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + Sum<T>
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}
