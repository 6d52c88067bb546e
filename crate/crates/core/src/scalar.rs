use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the numerical routines are written against. Implemented for
/// `f32` and `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from a count or index.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every float type")
    }

    fn of_f64(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
