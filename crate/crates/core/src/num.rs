//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating point scalar the geometry, routing, pricing and learning code is
/// written against. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Copy + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or configuration value.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Real")
    }

    /// Converts a count.
    fn of_count(count: usize) -> Self {
        Self::from_usize(count).expect("count is representable in every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real always widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
