//! Scalar abstraction shared by every numerical module.

use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the numerical core is generic over: `f32` or `f64`.
///
/// The tolerances quoted throughout the crate (1e-10 and tighter) are only
/// reachable in double precision; `f32` instantiations are useful for quick
/// exploration and for the classical ensemble code.
pub trait Real:
    nalgebra::RealField + Copy + Default + FromPrimitive + ToPrimitive + rustfft::FftNum
{
}

impl<T> Real for T where
    T: nalgebra::RealField + Copy + Default + FromPrimitive + ToPrimitive + rustfft::FftNum
{
}

/// Complex amplitude over `T`.
pub type C<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in scalar type")
}

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

/// `e^{i angle}`.
#[inline]
pub(crate) fn phase<T: Real>(angle: T) -> C<T> {
    Complex::new(angle.cos(), angle.sin())
}

#[inline]
pub(crate) fn modulus<T: Real>(z: C<T>) -> T {
    z.norm_sqr().sqrt()
}
