//! Scalar abstraction shared by the geometry, fitting and learning code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};

/// Real scalar used throughout the crate: `f32` or `f64`.
///
/// Knot and basis routines only need [`KnotScalar`], which also admits exact
/// rational types.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + ndarray::ScalarOperand
    + ndarray::LinalgScalar
    + serde::Serialize
    + for<'de> serde::Deserialize<'de>
    + 'static
{
    /// Lossy conversion from `f64`; exact for `f64` itself.
    fn of(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Minimal arithmetic needed by knot spans and the Cox–de Boor recursion.
///
/// Implemented for every `Num + Copy + PartialOrd` type, so `f64` and
/// `num_rational::Ratio<i64>` both work.
pub trait KnotScalar: num_traits::Num + Copy + PartialOrd + Debug {}

impl<T: num_traits::Num + Copy + PartialOrd + Debug> KnotScalar for T {}
