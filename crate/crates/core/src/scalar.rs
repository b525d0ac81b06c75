//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the simulators, optimizer and controller are generic over.
///
/// Implemented for `f32` and `f64`. `FromStr`/`Display` round-trip exactly for both,
/// which the CSV log format relies on.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + FromStr
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; infallible for the implemented types.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Default finite-difference step: `1e-6` where the mantissa allows it,
    /// otherwise the cube root of machine epsilon.
    fn default_fd_step() -> Self {
        let eps = Self::epsilon();
        if eps < Self::of(1e-12) {
            Self::of(1e-6)
        } else {
            eps.cbrt()
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
