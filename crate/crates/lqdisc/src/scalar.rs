//! Scalar abstraction: the numerics are generic over the floating point type.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable in all matrix computations: f32 or f64.
pub trait Scalar: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T> Scalar for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal not representable in scalar type")
}
