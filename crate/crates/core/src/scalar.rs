//! Scalar abstraction for the numeric core.
//!
//! The training core (matrices, trees, ensembles, metrics) is generic over
//! [`Scalar`] so it runs on `f32` as well as `f64`. The data pipeline uses
//! the [`crate::Real`] alias.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar usable by the training core: `f32` or `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 value not representable as scalar")
    }

    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count not representable as scalar")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
