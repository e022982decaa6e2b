//! Scalar abstraction shared by every numeric module.
//!
//! All geometry, fitting and imaging code is written against [`Scalar`], so
//! the same pipeline runs in `f32` (embedded-style sinks) or `f64` (analysis
//! and the test oracles).

use nalgebra::RealField;
use num_traits::ToPrimitive;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt::{Debug, Display};

/// Real floating-point type usable throughout the crate.
pub trait Scalar:
    RealField + Copy + ToPrimitive + Default + Debug + Display + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or measurement.
    fn of(value: f64) -> Self {
        nalgebra::convert(value)
    }

    /// Widening conversion used for I/O and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn of_usize(value: usize) -> Self {
        Self::of(value as f64)
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean; `None` for an empty iterator.
pub fn mean<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / T::of_usize(n))
}

/// Median of a slice (average of the middle pair for even lengths).
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / T::of(2.0)
    })
}
