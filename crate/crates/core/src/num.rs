//! Scalar abstraction for the numeric core.
//!
//! Everything that does arithmetic in this crate is generic over [`Scalar`]
//! so the same kernels run at `f32` or `f64`. The default simulation stack
//! instantiates `f64` (see the crate root aliases).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, SubAssign};

use num_traits::float::FloatConst;
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Lift an `f64` literal into the working scalar type.
#[inline]
pub fn lit<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("literal not representable in scalar type")
}

#[inline]
pub fn to_f64<S: Scalar>(v: S) -> f64 {
    v.to_f64().expect("scalar not representable as f64")
}

/// Wrap an angle to the canonical interval `[-pi, pi)`.
pub fn wrap_angle<S: Scalar>(a: S) -> S {
    let tau = S::PI() + S::PI();
    let mut r = a % tau;
    if r < -S::PI() {
        r += tau;
    }
    if r >= S::PI() {
        r -= tau;
    }
    r
}

#[inline]
pub fn clamp<S: Scalar>(v: S, lo: S, hi: S) -> S {
    v.max(lo).min(hi)
}

#[inline]
pub fn clamp01<S: Scalar>(v: S) -> S {
    clamp(v, S::zero(), S::one())
}
