//! Floating-point scalar abstraction shared by every solver component.
//!
//! The solvers are written once against [`Real`] and instantiated for `f32`
//! and `f64`. Eigensolves go through `nalgebra` (hence `RealField`) and all
//! FFTs through `rustfft` (hence `FftNum`).

use nalgebra::RealField;
use num_traits::ToPrimitive;
use rustfft::FftNum;

pub use rustfft::num_complex::Complex;

/// A real floating-point scalar: `f32` or `f64`.
pub trait Real: RealField + FftNum + ToPrimitive + Copy + Default {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working precision.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Widens a working-precision value to `f64`.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("finite real converts to f64")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    lit(n as f64)
}

#[inline]
pub fn abs<T: Real>(x: T) -> T {
    nalgebra::ComplexField::abs(x)
}

/// `exp(i theta)`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn two_pi<T: Real>() -> T {
    T::two_pi()
}

/// Machine epsilon of the working precision, widened to `f64`.
pub fn machine_epsilon<T: Real>() -> f64 {
    to_f64(T::default_epsilon())
}
