//! Scalar fields used by the polyhedral routines: `f64` with pivot
//! tolerances, and exact big rationals.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

pub type Rational = num_rational::BigRational;

pub trait Field:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    /// Exact for rationals (every finite double is a dyadic rational).
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// Sign with the field's zero tolerance applied.
    fn sign(&self) -> Ordering;
    fn abs(&self) -> Self;

    fn is_zero_tol(&self) -> bool {
        self.sign() == Ordering::Equal
    }
    fn is_pos(&self) -> bool {
        self.sign() == Ordering::Greater
    }
    fn is_neg(&self) -> bool {
        self.sign() == Ordering::Less
    }
    /// Comparison consistent with `sign`.
    fn cmp_tol(&self, other: &Self) -> Ordering {
        (self.clone() - other.clone()).sign()
    }
}

/// Zero band used for `f64` pivots and sign tests.
pub const F64_EPS: f64 = 1e-9;

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn sign(&self) -> Ordering {
        if *self > F64_EPS {
            Ordering::Greater
        } else if *self < -F64_EPS {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

impl Field for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        Rational::from_integer(BigInt::from(1))
    }
    fn from_f64(v: f64) -> Self {
        <Rational as FromPrimitive>::from_f64(v).expect("finite value")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn sign(&self) -> Ordering {
        if self.is_positive() {
            Ordering::Greater
        } else if self.is_negative() {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
}

pub fn dot<F: Field>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// Scale so that the largest absolute entry equals one.
pub fn normalize_max<F: Field>(v: &mut [F]) {
    let mut best = F::zero();
    for e in v.iter() {
        let a = e.abs();
        if a > best {
            best = a;
        }
    }
    if best > F::zero() {
        for e in v.iter_mut() {
            *e = e.clone() / best.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_from_f64_is_exact() {
        let r = <Rational as Field>::from_f64(0.1);
        assert_eq!(Field::to_f64(&r), 0.1);
        assert!(!r.is_zero_tol());
        let third = <Rational as Field>::one() / <Rational as Field>::from_f64(3.0);
        let sum = third.clone() + third.clone() + third;
        assert_eq!(sum, <Rational as Field>::one());
    }

    #[test]
    fn f64_sign_band() {
        assert_eq!(1e-12f64.sign(), Ordering::Equal);
        assert_eq!((-1e-3f64).sign(), Ordering::Less);
    }
}
