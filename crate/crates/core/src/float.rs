//! Scalar abstraction for the numeric core.
//!
//! Models, distances, scores and thresholds are generic over [`Real`] so the
//! same code runs at full (`f64`) or reduced (`f32`) precision. Concrete
//! `f64` aliases live at the crate root; tolerance-sensitive defaults assume
//! full precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the numeric core is generic over.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant (learning rate, tolerance, config value).
    ///
    /// Panics on values outside the target type's range, which cannot happen
    /// for the finite constants this crate feeds it.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant must convert")
    }
}

impl Real for f32 {}
impl Real for f64 {}
