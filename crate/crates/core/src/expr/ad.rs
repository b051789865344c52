//! Number types the expression evaluator runs over.
//!
//! [`Dual`] carries one directional derivative, [`HyperDual`] carries two
//! directions plus their mixed second derivative. Elementary functions go
//! through [`AdNum::chain`], which requests a derivative only when the
//! seed actually needs it: a singular derivative multiplied by a zero
//! seed is never formed, so e.g. `x^(4/3)` has a usable first derivative at
//! `x = 0` even though its second derivative is unbounded there.

use crate::error::EvalError;
use crate::scalar::Real;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait AdNum<T: Real>:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Div<Output = Self>
{
    fn constant(c: T) -> Self;

    /// Real part.
    fn re(&self) -> T;

    /// Applies a scalar function with value `f`, first derivative `df` and
    /// second derivative `d2f`, computing the derivatives only when needed.
    fn chain(
        self,
        f: T,
        df: impl FnOnce() -> Result<T, EvalError>,
        d2f: impl FnOnce() -> Result<T, EvalError>,
    ) -> Result<Self, EvalError>;
}

impl<T: Real> AdNum<T> for T {
    #[inline]
    fn constant(c: T) -> Self {
        c
    }
    #[inline]
    fn re(&self) -> T {
        *self
    }
    #[inline]
    fn chain(
        self,
        f: T,
        _df: impl FnOnce() -> Result<T, EvalError>,
        _d2f: impl FnOnce() -> Result<T, EvalError>,
    ) -> Result<Self, EvalError> {
        Ok(f)
    }
}

/// First-order dual number `re + d·ε`, `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual<T> {
    pub re: T,
    pub d: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, d: T) -> Self {
        Dual { re, d }
    }

    pub fn var(re: T) -> Self {
        Dual { re, d: T::one() }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, d: self.d + o.d }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, d: self.d - o.d }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, d: self.d * o.re + self.re * o.d }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let re = self.re * inv;
        Dual { re, d: (self.d - re * o.d) * inv }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, d: -self.d }
    }
}

impl<T: Real> AdNum<T> for Dual<T> {
    #[inline]
    fn constant(c: T) -> Self {
        Dual { re: c, d: T::zero() }
    }
    #[inline]
    fn re(&self) -> T {
        self.re
    }
    #[inline]
    fn chain(
        self,
        f: T,
        df: impl FnOnce() -> Result<T, EvalError>,
        _d2f: impl FnOnce() -> Result<T, EvalError>,
    ) -> Result<Self, EvalError> {
        if self.d == T::zero() {
            return Ok(Dual { re: f, d: T::zero() });
        }
        Ok(Dual { re: f, d: df()? * self.d })
    }
}

/// Hyper-dual number `re + a·ε₁ + b·ε₂ + ab·ε₁ε₂` with `ε₁² = ε₂² = 0`.
///
/// Seeding `ε₁` along direction `u` and `ε₂` along `v` yields `f`, `∇f·u`,
/// `∇f·v` and `uᵀ∇²f v` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual<T> {
    pub re: T,
    pub a: T,
    pub b: T,
    pub ab: T,
}

impl<T: Real> HyperDual<T> {
    pub fn new(re: T, a: T, b: T, ab: T) -> Self {
        HyperDual { re, a, b, ab }
    }
}

impl<T: Real> Add for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        HyperDual { re: self.re + o.re, a: self.a + o.a, b: self.b + o.b, ab: self.ab + o.ab }
    }
}

impl<T: Real> Sub for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        HyperDual { re: self.re - o.re, a: self.a - o.a, b: self.b - o.b, ab: self.ab - o.ab }
    }
}

impl<T: Real> Mul for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        HyperDual {
            re: self.re * o.re,
            a: self.a * o.re + self.re * o.a,
            b: self.b * o.re + self.re * o.b,
            ab: self.ab * o.re + self.a * o.b + self.b * o.a + self.re * o.ab,
        }
    }
}

impl<T: Real> Div for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        // 1/o via the chain rule with f' = -1/x², f'' = 2/x³
        let inv = T::one() / o.re;
        let d1 = -inv * inv;
        let d2 = T::of(2.0) * inv * inv * inv;
        let recip = HyperDual { re: inv, a: d1 * o.a, b: d1 * o.b, ab: d1 * o.ab + d2 * o.a * o.b };
        self * recip
    }
}

impl<T: Real> Neg for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        HyperDual { re: -self.re, a: -self.a, b: -self.b, ab: -self.ab }
    }
}

impl<T: Real> AdNum<T> for HyperDual<T> {
    #[inline]
    fn constant(c: T) -> Self {
        HyperDual { re: c, a: T::zero(), b: T::zero(), ab: T::zero() }
    }
    #[inline]
    fn re(&self) -> T {
        self.re
    }
    #[inline]
    fn chain(
        self,
        f: T,
        df: impl FnOnce() -> Result<T, EvalError>,
        d2f: impl FnOnce() -> Result<T, EvalError>,
    ) -> Result<Self, EvalError> {
        let zero = T::zero();
        if self.a == zero && self.b == zero && self.ab == zero {
            return Ok(Self::constant(f));
        }
        let d1 = df()?;
        let cross = self.a * self.b;
        let second = if cross == zero { zero } else { d2f()? * cross };
        Ok(HyperDual { re: f, a: d1 * self.a, b: d1 * self.b, ab: d1 * self.ab + second })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::var(3.0);
        let y = x * x * x;
        assert_eq!(y.re, 27.0);
        assert_eq!(y.d, 27.0);
    }

    #[test]
    fn hyperdual_second_derivative_of_quotient() {
        // f(x) = 1/x at x = 2: f'' = 2/x³ = 0.25
        let x = HyperDual::new(2.0, 1.0, 1.0, 0.0);
        let one = HyperDual::<f64>::constant(1.0);
        let y = one / x;
        assert!((y.re - 0.5).abs() < 1e-15);
        assert!((y.a + 0.25).abs() < 1e-15);
        assert!((y.ab - 0.25).abs() < 1e-15);
    }

    #[test]
    fn chain_skips_unneeded_derivatives() {
        let x = HyperDual::new(0.0_f64, 1.0, 0.0, 0.0);
        let y = x
            .chain(0.0, || Ok(0.0), || Err(EvalError::DerivativeSingular { func: "t", arg: 0.0 }))
            .unwrap();
        assert_eq!(y.a, 0.0);
        let both = HyperDual::new(0.0_f64, 1.0, 1.0, 0.0);
        assert!(both
            .chain(0.0, || Ok(0.0), || Err(EvalError::DerivativeSingular { func: "t", arg: 0.0 }))
            .is_err());
    }
}
