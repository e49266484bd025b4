//! Scalar abstraction shared by every numerical module.
//!
//! All of the math is written once against [`Real`] and instantiated for
//! `f32` and `f64`. The dense factorizations are dispatched to `faer`, which
//! is why `faer`'s own `RealField` is part of the bound.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point scalar usable by the crate (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + faer::traits::RealField
    + Debug
    + Display
    + std::fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Converts a count or index into the scalar type.
    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over [`Real`].
pub type C<T> = Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn creal<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

/// `|z|^2` without the square root.
#[inline]
pub fn abs2<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// Converts a complex value between scalar precisions through `f64`.
#[inline]
pub fn cast_c<S: Real, T: Real>(z: C<S>) -> C<T> {
    Complex::new(T::lit(z.re.to_f64_lossy()), T::lit(z.im.to_f64_lossy()))
}

/// Conjugate-linear inner product `a^* b`.
pub fn dotc<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm2<T: Real>(a: &[C<T>]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + abs2(*x)).sqrt()
}

/// Scales `a` to unit Euclidean norm in place and returns the old norm.
pub fn normalize<T: Real>(a: &mut [C<T>]) -> T {
    let n = norm2(a);
    if n > T::zero() {
        let inv = n.recip();
        for x in a.iter_mut() {
            *x = x.scale(inv);
        }
    }
    n
}

/// Pairwise (cascade) summation, used wherever reduction order must be fixed.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().fold(T::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
