use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Element type of a tensor. Implemented for `f32` (training default)
/// and `f64` (gradient checking).
pub trait Scalar: Float + Sum + Debug + Display + Default + Copy + 'static {
    const DTYPE: &'static str;

    fn cast(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn cast(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn cast(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}
