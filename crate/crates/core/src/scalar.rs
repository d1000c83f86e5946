//! Floating point abstraction used by the numerical core.
//!
//! The GP, acquisition and metric code is written against [`Scalar`] so the
//! same routines run in `f32` (compact, e.g. for embedding in dashboards) and
//! `f64` (the default everywhere else).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Scalar>(z: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(z * z) / T::lit(2.0)).exp()
}

/// Standard normal distribution function, accurate in both tails.
#[inline]
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * (-z / T::lit(std::f64::consts::SQRT_2)).erfc()
}
