//! Floating-point scalar abstraction shared by every numerical module.
//!
//! All operators, the coordinate network and the priors are written against
//! [`Real`], which is implemented for `f32` and `f64`. Computation defaults to
//! `f64` (see the aliases at the crate root); files store `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + LinalgScalar
    + ScalarOperand
    + rustfft::FftNum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; exact for `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real is representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|re| + |im|`, the separable complex L1 magnitude.
#[inline]
pub fn l1_abs<T: Real>(z: Complex<T>) -> T {
    Float::abs(z.re) + Float::abs(z.im)
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign0<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[inline]
pub fn cast_complex<S: Real, T: Real>(z: Complex<S>) -> Complex<T> {
    Complex::new(T::of(z.re.as_f64()), T::of(z.im.as_f64()))
}

/// Real part of `<a, b> = sum conj(a) * b`.
pub fn re_inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// `<a, b> = sum conj(a) * b`.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm2<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}
