//! Forward-mode dual numbers used to differentiate per-point loss densities.
//!
//! Loss densities are written once, generically over [`Real`], and evaluated
//! either on plain `f64` (loss values) or on [`Dual`] (partials with respect to
//! the network outputs at a point). A `Dual` carries [`LANES`] tangent lanes;
//! functions with more inputs are differentiated in several sweeps.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::problems::{FieldArg, Pairing};

/// Number of tangent lanes carried by one [`Dual`].
pub const LANES: usize = 16;

/// Scalar arithmetic shared by `f64` and [`Dual`].
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;

    /// Real part.
    fn re(self) -> f64;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn sqrt(self) -> Self;

    /// `self^e`. Where the base is exactly zero the tangent is taken as zero,
    /// which is the true derivative for the `|v|^e` uses with `e > 1`.
    fn powf(self, e: f64) -> Self;

    /// `|self|^e` for `e > 1`.
    fn abs_powf(self, e: f64) -> Self;

    fn is_finite(self) -> bool {
        self.re().is_finite()
    }

    /// Evaluates a pairing density in this scalar type.
    fn pairing(p: &dyn Pairing, x: &[f64], state: FieldArg<'_, Self>, test: FieldArg<'_, Self>) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    #[inline]
    fn abs_powf(self, e: f64) -> Self {
        self.abs().powf(e)
    }
    fn pairing(p: &dyn Pairing, x: &[f64], state: FieldArg<'_, f64>, test: FieldArg<'_, f64>) -> f64 {
        p.eval_f64(x, state, test)
    }
}

/// Dual number `re + Σ eps[l] ε_l` with [`LANES`] independent tangents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: [f64; LANES],
}

impl Dual {
    #[inline]
    pub fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; LANES] }
    }

    /// A variable seeded with unit tangent in `lane`.
    #[inline]
    pub fn variable(re: f64, lane: usize) -> Self {
        let mut eps = [0.0; LANES];
        eps[lane] = 1.0;
        Self { re, eps }
    }

    /// Applies the chain rule with scalar derivative `d`; lanes that are
    /// exactly zero stay zero even when `d` is infinite.
    #[inline]
    fn chain(self, re: f64, d: f64) -> Self {
        let mut eps = [0.0; LANES];
        for (o, &e) in eps.iter_mut().zip(self.eps.iter()) {
            if e != 0.0 {
                *o = d * e;
            }
        }
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(mut self, rhs: Dual) -> Dual {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(mut self, rhs: Dual) -> Dual {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        let mut eps = [0.0; LANES];
        for l in 0..LANES {
            eps[l] = self.eps[l] * rhs.re + self.re * rhs.eps[l];
        }
        Dual { re: self.re * rhs.re, eps }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; LANES];
        for l in 0..LANES {
            eps[l] = (self.eps[l] - re * rhs.eps[l]) * inv;
        }
        Dual { re, eps }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(mut self) -> Dual {
        self.re = -self.re;
        for e in self.eps.iter_mut() {
            *e = -*e;
        }
        self
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(mut self, rhs: f64) -> Dual {
        self.re += rhs;
        self
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(mut self, rhs: f64) -> Dual {
        self.re -= rhs;
        self
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(mut self, rhs: f64) -> Dual {
        self.re *= rhs;
        for e in self.eps.iter_mut() {
            *e *= rhs;
        }
        self
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: f64) -> Dual {
        self * (1.0 / rhs)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Dual) {
        *self = *self + rhs;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, rhs: Dual) {
        *self = *self - rhs;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, rhs: Dual) {
        *self = *self * rhs;
    }
}

impl Real for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, 0.5 / r)
    }
    #[inline]
    fn powf(self, e: f64) -> Self {
        let r = self.re.powf(e);
        if self.re == 0.0 {
            return Dual::constant(r);
        }
        self.chain(r, e * self.re.powf(e - 1.0))
    }
    #[inline]
    fn abs_powf(self, e: f64) -> Self {
        let a = self.re.abs();
        let r = a.powf(e);
        if a == 0.0 {
            return Dual::constant(r);
        }
        self.chain(r, e * a.powf(e - 1.0) * self.re.signum())
    }
    fn pairing(p: &dyn Pairing, x: &[f64], state: FieldArg<'_, Dual>, test: FieldArg<'_, Dual>) -> Dual {
        p.eval_dual(x, state, test)
    }
}

/// Dot product of two equally long slices.
#[inline]
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Squared Euclidean norm.
#[inline]
pub fn norm_sq<S: Real>(a: &[S]) -> S {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let x = Dual::variable(3.0, 0);
        let y = Dual::variable(2.0, 1);
        let f = x * y + x / y;
        assert_eq!(f.re, 7.5);
        assert!((f.eps[0] - (2.0 + 0.5)).abs() < 1e-15);
        assert!((f.eps[1] - (3.0 - 3.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn powf_at_zero_has_zero_tangent() {
        let x = Dual::variable(0.0, 0);
        let f = (x * x).powf(0.75);
        assert_eq!(f.re, 0.0);
        assert_eq!(f.eps[0], 0.0);
    }

    #[test]
    fn abs_powf_derivative_keeps_sign() {
        let x = Dual::variable(-2.0, 3);
        let f = x.abs_powf(1.5);
        assert!((f.re - 2f64.powf(1.5)).abs() < 1e-14);
        assert!((f.eps[3] + 1.5 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sqrt_matches_closed_form() {
        let x = Dual::variable(4.0, 0);
        let f = x.sqrt();
        assert_eq!(f.re, 2.0);
        assert_eq!(f.eps[0], 0.25);
    }
}
