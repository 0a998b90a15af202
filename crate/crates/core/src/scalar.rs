//! Scalar abstraction: the numeric core is generic over the float width.

use num_traits::{Float, NumAssignOps, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar accepted by the tensor and training machinery.
pub trait Scalar:
    Float + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to scalar")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar converts to f64")
    }

    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
