//! Number types the expression evaluator runs over.
//!
//! `f64` gives plain values; [`Dual`] carries one directional derivative
//! alongside the value. Duals nest (`Dual<Dual<f64>>`), which is how the
//! optimizer differentiates the transmitted variance, itself built from
//! first partials.

use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(value: f64) -> Self;
    /// Real part, used for domain checks.
    fn value(&self) -> f64;
    /// True when the value and every carried derivative is finite.
    fn is_finite(&self) -> bool;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn powf(self, exponent: f64) -> Self;
    fn abs(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn powf(self, exponent: f64) -> Self {
        powf(self, exponent)
    }
    #[inline]
    fn abs(self) -> Self {
        libm::fabs(self)
    }
}

/// `libm::pow` with the small integer powers done by repeated
/// multiplication, so `x^2` is bit-identical to `x*x`.
pub(crate) fn powf(base: f64, exponent: f64) -> f64 {
    if exponent == 2.0 {
        base * base
    } else if exponent == 1.0 {
        base
    } else if exponent == 3.0 {
        base * base * base
    } else {
        libm::pow(base, exponent)
    }
}

/// Forward-mode dual number `re + du·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Self { re, du }
    }

    /// Seeded variable: derivative part one.
    pub fn variable(re: T) -> Self {
        Self {
            re,
            du: T::constant(1.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.du + rhs.du)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.du - rhs.du)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.re * rhs.re, self.du * rhs.re + self.re * rhs.du)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re;
        Self::new(q, (self.du - q * rhs.du) / rhs.re)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.du)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(value: f64) -> Self {
        Self::new(T::constant(value), T::constant(0.0))
    }

    fn value(&self) -> f64 {
        self.re.value()
    }

    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.du.is_finite()
    }

    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Self::new(r, self.du / (T::constant(2.0) * r))
    }

    fn ln(self) -> Self {
        Self::new(self.re.ln(), self.du / self.re)
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, self.du * e)
    }

    fn powf(self, exponent: f64) -> Self {
        if exponent == 0.0 {
            return Self::constant(1.0);
        }
        let slope = T::constant(exponent) * self.re.powf(exponent - 1.0);
        Self::new(self.re.powf(exponent), self.du * slope)
    }

    fn abs(self) -> Self {
        if self.re.value() < 0.0 {
            -self
        } else {
            self
        }
    }
}
