//! Scalar abstraction: every solver in this crate is generic over the
//! floating-point type through [`Scalar`].

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable throughout the crate (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + NumAssign + std::iter::Sum + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar type.
///
/// Panics if the value does not fit; only used for compile-time constants.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("literal representable in scalar type")
}

/// Two-component vector used for per-pixel gradients and fluxes.
pub type Vec2<T> = (T, T);

/// Euclidean norm of a 2-vector.
#[inline]
pub fn vec2_norm<T: Scalar>(v: Vec2<T>) -> T {
    (v.0 * v.0 + v.1 * v.1).sqrt()
}
