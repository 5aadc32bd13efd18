//! Scalar abstraction shared by every estimator.
//!
//! The numeric kernels are written once against [`Real`] and instantiated for
//! `f32` and `f64`. Panel I/O is always `f64`; series can be cast down with
//! [`crate::panel::AgeSeries::cast`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the estimation kernels.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance used for rank and degeneracy checks.
    fn rank_tol() -> Self;
}

impl Real for f32 {
    fn rank_tol() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn rank_tol() -> Self {
        1e-10
    }
}

/// Sum of `a[i] * b[i]`.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
