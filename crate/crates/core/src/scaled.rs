//! Complex numbers with a detached binary exponent.
//!
//! A value is `mant · 2^exp` with `0.5 ≤ max(|Re mant|, |Im mant|) < 1` (or `mant = 0`), so
//! products of factors like `e^{±4000}` never leave the f64 range.

use num_complex::Complex64;
use std::f64::consts::LN_2;
use std::ops::{Add, Mul};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mant: Complex64,
    pub exp: i64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { mant: Complex64 { re: 0.0, im: 0.0 }, exp: 0 };

    pub fn new(z: Complex64) -> Self {
        Self { mant: z, exp: 0 }.normalized()
    }

    /// `e^z` for any complex `z` whose real part fits an i64 after scaling.
    pub fn exp_of(z: Complex64) -> Self {
        let k = (z.re / LN_2).floor();
        let rem = z.re - k * LN_2;
        let mant = Complex64::from_polar(rem.exp(), z.im);
        Self { mant, exp: k as i64 }.normalized()
    }

    fn normalized(self) -> Self {
        let m = self.mant.re.abs().max(self.mant.im.abs());
        if m == 0.0 || !m.is_finite() {
            return if m == 0.0 { Self::ZERO } else { self };
        }
        let biased = ((m.to_bits() >> 52) & 0x7ff) as i64;
        if biased == 0 {
            // subnormal: fall back to the slow path
            let e = m.log2().floor() as i64 + 1;
            return Self { mant: self.mant * 2f64.powi(-e as i32), exp: self.exp + e };
        }
        let e = biased - 1022;
        Self { mant: self.mant * pow2(-e), exp: self.exp + e }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.re == 0.0 && self.mant.im == 0.0
    }

    /// Natural log of the modulus; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mant.norm().ln() + self.exp as f64 * LN_2
        }
    }

    /// Plain complex value; underflows to zero and overflows to infinity.
    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        if self.exp > 1100 {
            return Complex64::new(f64::INFINITY, f64::INFINITY);
        }
        if self.exp < -1200 {
            return Complex64::new(0.0, 0.0);
        }
        let half = self.exp / 2;
        self.mant * 2f64.powi(half as i32) * 2f64.powi((self.exp - half) as i32)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { mant: self.mant * c, exp: self.exp }.normalized()
    }
}

/// `2^k` for `|k| ≤ 1022`.
fn pow2(k: i64) -> f64 {
    f64::from_bits(((1023 + k) as u64) << 52)
}

impl Default for Scaled {
    fn default() -> Self {
        Scaled::ZERO
    }
}

impl Mul for Scaled {
    type Output = Scaled;
    fn mul(self, rhs: Scaled) -> Scaled {
        Scaled { mant: self.mant * rhs.mant, exp: self.exp + rhs.exp }.normalized()
    }
}

impl Add for Scaled {
    type Output = Scaled;
    fn add(self, rhs: Scaled) -> Scaled {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let shift = big.exp - small.exp;
        if shift > 1000 {
            return big;
        }
        Scaled { mant: big.mant + small.mant * pow2(-shift), exp: big.exp }.normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_exponents_cancel() {
        let a = Scaled::exp_of(Complex64::new(3000.0, 0.7));
        let b = Scaled::exp_of(Complex64::new(-2999.0, -0.7));
        let p = (a * b).to_complex();
        assert!((p.re - 1f64.exp()).abs() < 1e-10 && p.im.abs() < 1e-10);
        assert!((a.ln_abs() - 3000.0).abs() < 1e-9);
    }

    #[test]
    fn addition_aligns_exponents() {
        let a = Scaled::new(Complex64::new(1.5, 0.0));
        let b = Scaled::new(Complex64::new(0.0, 1e-3));
        let s = (a + b).to_complex();
        assert!((s - Complex64::new(1.5, 1e-3)).norm() < 1e-15);
        assert_eq!((Scaled::ZERO + a).to_complex(), Complex64::new(1.5, 0.0));
    }
}
