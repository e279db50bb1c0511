//! Scalars that carry a truncated Taylor expansion in time.
//!
//! A [`Jet`] stores normalized coefficients `c[k] = f^(k)(t0)/k!` up to a
//! per-value order. Arithmetic propagates the expansion exactly, so running a
//! pointwise formula on jets yields its time derivatives alongside its value.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Highest time order representable by a [`Jet`].
pub const MAX_ORDER: usize = 3;

/// Arithmetic shared by plain `f64` values and [`Jet`]s.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A time-independent value.
    fn cst(x: f64) -> Self;
    /// Zeroth-order coefficient.
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::cst(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Truncated Taylor series in time.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; MAX_ORDER + 1],
    ord: u8,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coeffs()).finish()
    }
}

impl Jet {
    /// Builds a jet from normalized coefficients; the order is `coeffs.len() - 1`.
    pub fn new(coeffs: &[f64]) -> Self {
        assert!(!coeffs.is_empty() && coeffs.len() <= MAX_ORDER + 1);
        let mut c = [0.0; MAX_ORDER + 1];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Jet {
            c,
            ord: (coeffs.len() - 1) as u8,
        }
    }

    /// The affine jet `v + t*d`.
    pub fn variable(v: f64, d: f64) -> Self {
        Jet::new(&[v, d])
    }

    pub fn order(&self) -> usize {
        self.ord as usize
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c[..=self.order()]
    }

    /// Normalized coefficient `k`, zero above the order.
    pub fn coeff(&self, k: usize) -> f64 {
        if k <= self.order() {
            self.c[k]
        } else {
            0.0
        }
    }

    /// `k`-th time derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for j in 2..=k {
            fact *= j as f64;
        }
        self.coeff(k) * fact
    }

    /// Time derivative as a jet of one lower order. An order-0 jet has no
    /// known derivative and yields NaN.
    pub fn dt(&self) -> Jet {
        if self.ord == 0 {
            return Jet::new(&[f64::NAN]);
        }
        let m = self.order() - 1;
        let mut c = [0.0; MAX_ORDER + 1];
        for k in 0..=m {
            c[k] = (k + 1) as f64 * self.c[k + 1];
        }
        Jet { c, ord: m as u8 }
    }

    /// Drops coefficients above `ord`.
    pub fn truncate(&self, ord: usize) -> Jet {
        let mut out = *self;
        out.ord = out.ord.min(ord as u8);
        for k in out.order() + 1..=MAX_ORDER {
            out.c[k] = 0.0;
        }
        out
    }

    #[inline]
    fn with_order(ord: usize) -> Jet {
        Jet {
            c: [0.0; MAX_ORDER + 1],
            ord: ord as u8,
        }
    }
}

impl Scalar for Jet {
    #[inline]
    fn cst(x: f64) -> Self {
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = x;
        Jet {
            c,
            ord: MAX_ORDER as u8,
        }
    }

    #[inline]
    fn value(&self) -> f64 {
        self.c[0]
    }

    fn exp(self) -> Self {
        let m = self.order();
        let mut e = Jet::with_order(m);
        e.c[0] = self.c[0].exp();
        for k in 1..=m {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.c[j] * e.c[k - j];
            }
            e.c[k] = acc / k as f64;
        }
        e
    }

    fn ln(self) -> Self {
        let m = self.order();
        let a0 = self.c[0];
        let mut l = Jet::with_order(m);
        l.c[0] = a0.ln();
        for k in 1..=m {
            let mut acc = 0.0;
            for j in 1..k {
                acc += j as f64 * l.c[j] * self.c[k - j];
            }
            l.c[k] = (self.c[k] - acc / k as f64) / a0;
        }
        l
    }

    fn sqrt(self) -> Self {
        let m = self.order();
        let mut s = Jet::with_order(m);
        s.c[0] = self.c[0].sqrt();
        for k in 1..=m {
            let mut acc = 0.0;
            for j in 1..k {
                acc += s.c[j] * s.c[k - j];
            }
            s.c[k] = (self.c[k] - acc) / (2.0 * s.c[0]);
        }
        s
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        let m = self.ord.min(o.ord) as usize;
        let mut r = Jet::with_order(m);
        for k in 0..=m {
            r.c[k] = self.c[k] + o.c[k];
        }
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        let m = self.ord.min(o.ord) as usize;
        let mut r = Jet::with_order(m);
        for k in 0..=m {
            r.c[k] = self.c[k] - o.c[k];
        }
        r
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let m = self.ord.min(o.ord) as usize;
        let mut r = Jet::with_order(m);
        for k in 0..=m {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.c[j] * o.c[k - j];
            }
            r.c[k] = acc;
        }
        r
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        let m = self.ord.min(o.ord) as usize;
        let mut r = Jet::with_order(m);
        for k in 0..=m {
            let mut acc = self.c[k];
            for j in 1..=k {
                acc -= o.c[j] * r.c[k - j];
            }
            r.c[k] = acc / o.c[0];
        }
        r
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        let mut r = self;
        for x in r.c.iter_mut() {
            *x = -*x;
        }
        r
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, x: f64) -> Jet {
        let mut r = self;
        r.c[0] += x;
        r
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, x: f64) -> Jet {
        let mut r = self;
        r.c[0] -= x;
        r
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, x: f64) -> Jet {
        let mut r = self;
        for v in r.c.iter_mut() {
            *v *= x;
        }
        r
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, x: f64) -> Jet {
        let mut r = self;
        for v in r.c.iter_mut() {
            *v /= x;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Jet {
        Jet::new(&[0.3, 1.0, 0.0, 0.0])
    }

    #[test]
    fn exp_matches_derivatives_of_exp() {
        let e = t().exp();
        let v = 0.3f64.exp();
        for k in 0..=3 {
            assert!((e.derivative(k) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn ln_inverts_exp() {
        let x = Jet::new(&[0.7, -0.2, 0.05, 0.3]);
        let y = x.exp().ln();
        for k in 0..=3 {
            assert!((y.coeff(k) - x.coeff(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let x = Jet::new(&[1.7, 0.4, -0.3, 0.11]);
        let r = x.sqrt();
        let y = r * r;
        for k in 0..=3 {
            assert!((y.coeff(k) - x.coeff(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn division_is_inverse_of_product() {
        let a = Jet::new(&[1.1, 0.2, 0.3, -0.4]);
        let b = Jet::new(&[0.9, -0.5, 0.25, 0.125]);
        let q = (a * b) / b;
        for k in 0..=3 {
            assert!((q.coeff(k) - a.coeff(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn dt_shifts_and_lowers_order() {
        let x = Jet::new(&[1.0, 2.0, 3.0, 4.0]);
        let d = x.dt();
        assert_eq!(d.order(), 2);
        assert_eq!(d.coeffs(), &[2.0, 6.0, 12.0]);
        assert!(Jet::new(&[1.0]).dt().value().is_nan());
    }

    #[test]
    fn mixed_order_takes_minimum() {
        let a = Jet::new(&[1.0, 1.0]);
        let b = Jet::new(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!((a * b).order(), 1);
        assert_eq!((Jet::cst(2.0) * a).order(), 1);
    }

    #[test]
    fn order_zero_arithmetic_equals_f64() {
        let (x, y) = (0.734_f64, -1.25_f64);
        let (jx, jy) = (Jet::new(&[x]), Jet::new(&[y]));
        assert_eq!((jx * jy / (jx + 2.0)).value(), x * y / (x + 2.0));
        assert_eq!((jx.exp() - (-jy).sqrt()).value(), x.exp() - (-y).sqrt());
    }
}
