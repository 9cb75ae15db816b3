//! Tagged real constants with exact arithmetic where the tag allows it.
//!
//! `Quad` covers rationals and elements `a + b√d` of a real quadratic field;
//! `Liouville` covers `offset + scale·λ^power` with `λ = Σ base^{-n!}`.
//! Everything else degrades to `Unknown`, which only carries a float.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Exact {
    /// `a + b√d`, `d` square-free; `d = 1` and `b = 0` for rationals.
    Quad { d: u64, a: BigRational, b: BigRational },
    Liouville { base: u32, offset: BigRational, scale: BigRational, power: u32 },
    Unknown(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArithClass {
    Rational,
    QuadraticIrrational,
    LiouvilleConstructed,
    Unknown,
}

pub fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn squarefree_split(d: u64) -> (u64, u64) {
    // d = k²·r with r square-free
    let mut k = 1u64;
    let mut r = d;
    let mut p = 2u64;
    while p * p <= r {
        while r % (p * p) == 0 {
            r /= p * p;
            k *= p;
        }
        p += 1;
    }
    (k, r)
}

impl Exact {
    pub fn rational(q: BigRational) -> Self {
        Exact::Quad { d: 1, a: q, b: BigRational::zero() }
    }

    pub fn int(n: i64) -> Self {
        Self::rational(rat(n, 1))
    }

    /// `a + b√d` with the square part of `d` moved into `b`.
    pub fn quad(d: u64, a: BigRational, b: BigRational) -> Result<Self> {
        if d == 0 {
            return Ok(Self::rational(a));
        }
        let (k, r) = squarefree_split(d);
        let b = b * BigRational::from_integer(BigInt::from(k));
        if r == 1 || b.is_zero() {
            return Ok(Self::rational(a + b));
        }
        Ok(Exact::Quad { d: r, a, b })
    }

    pub fn liouville(base: u32) -> Self {
        Exact::Liouville { base, offset: BigRational::zero(), scale: BigRational::one(), power: 1 }
    }

    /// Float values that are integers are taken as exact rationals.
    pub fn from_f64(x: f64) -> Self {
        if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15 {
            Self::int(x as i64)
        } else {
            Exact::Unknown(x)
        }
    }

    pub(crate) fn from_f64_exact(x: f64) -> Option<Self> {
        match Self::from_f64(x) {
            Exact::Unknown(_) => None,
            e => Some(e),
        }
    }

    pub fn class(&self) -> ArithClass {
        match self {
            Exact::Quad { b, .. } if b.is_zero() => ArithClass::Rational,
            Exact::Quad { .. } => ArithClass::QuadraticIrrational,
            Exact::Liouville { scale, .. } if scale.is_zero() => ArithClass::Rational,
            Exact::Liouville { .. } => ArithClass::LiouvilleConstructed,
            Exact::Unknown(_) => ArithClass::Unknown,
        }
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        match self {
            Exact::Quad { a, b, .. } if b.is_zero() => Some(a.clone()),
            Exact::Liouville { offset, scale, .. } if scale.is_zero() => Some(offset.clone()),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> Option<bool> {
        match self {
            Exact::Quad { a, b, .. } => Some(a.is_zero() && b.is_zero()),
            Exact::Liouville { scale, offset, .. } => {
                if scale.is_zero() {
                    Some(offset.is_zero())
                } else {
                    Some(false)
                }
            }
            Exact::Unknown(x) => {
                if *x == 0.0 {
                    None
                } else {
                    Some(false)
                }
            }
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Exact::Quad { d, a, b } => ratio_f64(a) + ratio_f64(b) * (*d as f64).sqrt(),
            Exact::Liouville { base, offset, scale, power } => {
                let lam: f64 = (1..=6).map(|n| (*base as f64).powf(-(factorial(n) as f64))).sum();
                ratio_f64(offset) + ratio_f64(scale) * lam.powi(*power as i32)
            }
            Exact::Unknown(x) => *x,
        }
    }

    pub fn neg(&self) -> Exact {
        match self {
            Exact::Quad { d, a, b } => Exact::Quad { d: *d, a: -a.clone(), b: -b.clone() },
            Exact::Liouville { base, offset, scale, power } => {
                Exact::Liouville { base: *base, offset: -offset.clone(), scale: -scale.clone(), power: *power }
            }
            Exact::Unknown(x) => Exact::Unknown(-x),
        }
    }

    pub fn add(&self, o: &Exact) -> Exact {
        use Exact::*;
        match (self, o) {
            (Quad { d: d1, a: a1, b: b1 }, Quad { d: d2, a: a2, b: b2 }) => {
                if b1.is_zero() {
                    return Quad { d: *d2, a: a1 + a2, b: b2.clone() };
                }
                if b2.is_zero() || d1 == d2 {
                    let b = b1 + b2;
                    let d = if b.is_zero() { 1 } else { *d1 };
                    return Quad { d, a: a1 + a2, b };
                }
                Unknown(self.to_f64() + o.to_f64())
            }
            (Liouville { base, offset, scale, power }, q) | (q, Liouville { base, offset, scale, power }) => {
                match q.as_rational() {
                    Some(r) => Liouville { base: *base, offset: offset + r, scale: scale.clone(), power: *power },
                    None => Unknown(self.to_f64() + o.to_f64()),
                }
            }
            _ => Unknown(self.to_f64() + o.to_f64()),
        }
    }

    pub fn sub(&self, o: &Exact) -> Exact {
        self.add(&o.neg())
    }

    /// Product; `None` only never, kept as `Option` for fallible float scaling at call sites.
    pub fn mul(&self, o: &Exact) -> Option<Exact> {
        use Exact::*;
        if self.is_zero() == Some(true) || o.is_zero() == Some(true) {
            return Some(Exact::int(0));
        }
        Some(match (self, o) {
            (Quad { d: d1, a: a1, b: b1 }, Quad { d: d2, a: a2, b: b2 }) => {
                if b1.is_zero() {
                    let b = a1 * b2;
                    Quad { d: if b.is_zero() { 1 } else { *d2 }, a: a1 * a2, b }
                } else if b2.is_zero() {
                    let b = b1 * a2;
                    Quad { d: if b.is_zero() { 1 } else { *d1 }, a: a1 * a2, b }
                } else if d1 == d2 {
                    let dd = BigRational::from_integer(BigInt::from(*d1));
                    let a = a1 * a2 + b1 * b2 * dd;
                    let b = a1 * b2 + a2 * b1;
                    Quad { d: if b.is_zero() { 1 } else { *d1 }, a, b }
                } else {
                    Unknown(self.to_f64() * o.to_f64())
                }
            }
            (Liouville { base, offset, scale, power }, q) | (q, Liouville { base, offset, scale, power }) => {
                match q.as_rational() {
                    Some(r) if r.is_zero() => Exact::int(0),
                    Some(r) => Liouville { base: *base, offset: offset * &r, scale: scale * &r, power: *power },
                    None => match (self, o) {
                        (
                            Liouville { base: b1, offset: o1, scale: s1, power: p1 },
                            Liouville { base: b2, offset: o2, scale: s2, power: p2 },
                        ) if b1 == b2 && o1.is_zero() && o2.is_zero() => {
                            Liouville { base: *b1, offset: BigRational::zero(), scale: s1 * s2, power: p1 + p2 }
                        }
                        _ => Unknown(self.to_f64() * o.to_f64()),
                    },
                }
            }
            _ => Unknown(self.to_f64() * o.to_f64()),
        })
    }

    pub fn pow(&self, k: u32) -> Exact {
        let mut acc = Exact::int(1);
        for _ in 0..k {
            acc = acc.mul(self).expect("infallible");
        }
        acc
    }

    /// Rational enclosure `[lo, hi]` of width at most `2^{-bits}` (exact for rationals).
    pub fn interval(&self, bits: u32) -> (BigRational, BigRational) {
        match self {
            Exact::Quad { d, a, b } => {
                if b.is_zero() {
                    return (a.clone(), a.clone());
                }
                let extra = b.numer().bits() as u32 + 8;
                let k = bits + extra;
                let scaled = BigUint::from(*d) << (2 * k as usize);
                let root = scaled.sqrt();
                let den = BigInt::one() << k as usize;
                let lo_r = BigRational::new(BigInt::from(root.clone()), den.clone());
                let hi_r = BigRational::new(BigInt::from(root) + 1, den);
                let (x, y) = (a + b * &lo_r, a + b * &hi_r);
                if b.is_positive() {
                    (x, y)
                } else {
                    (y, x)
                }
            }
            Exact::Liouville { base, offset, scale, power } => {
                let extra = scale.numer().bits() as u32 + 8 * *power + 8;
                let (lo, hi) = liouville_interval(*base, bits + extra);
                let (plo, phi) = (pow_rat(&lo, *power), pow_rat(&hi, *power));
                let (x, y) = (offset + scale * &plo, offset + scale * &phi);
                if scale.is_negative() {
                    (y, x)
                } else {
                    (x, y)
                }
            }
            Exact::Unknown(x) => {
                let r = BigRational::from_float(*x).unwrap_or_else(BigRational::zero);
                let ulp = BigRational::from_float(f64_ulp(*x)).unwrap_or_else(BigRational::zero);
                (&r - &ulp, &r + &ulp)
            }
        }
    }

    /// Parse a JSON constant: a number or one of the tagged objects.
    pub fn from_json(v: &Value) -> Result<Exact> {
        if let Some(x) = v.as_f64() {
            return Ok(Exact::from_f64(x));
        }
        let obj = v.as_object().ok_or_else(|| Error::BadInput(format!("constant expected, got {v}")))?;
        if let Some(r) = obj.get("rational") {
            return Ok(Exact::rational(parse_ratio(r)?));
        }
        if let Some(q) = obj.get("quadirr") {
            let d = q.get("d").and_then(Value::as_u64).ok_or_else(|| Error::BadInput("quadirr.d".into()))?;
            let a = q.get("a").map(parse_ratio).transpose()?.unwrap_or_else(BigRational::zero);
            let b = q.get("b").map(parse_ratio).transpose()?.unwrap_or_else(BigRational::zero);
            return Exact::quad(d, a, b);
        }
        if let Some(l) = obj.get("liouville") {
            let base = l.get("base").and_then(Value::as_u64).unwrap_or(10);
            if !(2..=1000).contains(&base) {
                return Err(Error::BadInput(format!("liouville base {base} outside 2..=1000")));
            }
            let scale = l.get("scale").map(parse_ratio).transpose()?.unwrap_or_else(BigRational::one);
            let offset = l.get("offset").map(parse_ratio).transpose()?.unwrap_or_else(BigRational::zero);
            let power = l.get("power").and_then(Value::as_u64).unwrap_or(1) as u32;
            return Ok(Exact::Liouville { base: base as u32, offset, scale, power: power.max(1) });
        }
        Err(Error::BadInput(format!("unknown constant tag {v}")))
    }

    pub fn to_json(&self) -> Value {
        let r = |q: &BigRational| serde_json::json!([q.numer().to_string(), q.denom().to_string()]);
        match self {
            Exact::Quad { d, a, b } if b.is_zero() || *d == 1 => serde_json::json!({ "rational": r(a) }),
            Exact::Quad { d, a, b } => serde_json::json!({ "quadirr": { "d": d, "a": r(a), "b": r(b) } }),
            Exact::Liouville { base, offset, scale, power } => serde_json::json!({
                "liouville": { "base": base, "offset": r(offset), "scale": r(scale), "power": power }
            }),
            Exact::Unknown(x) => serde_json::json!(x),
        }
    }
}

fn parse_int(v: &Value) -> Result<BigInt> {
    if let Some(i) = v.as_i64() {
        return Ok(BigInt::from(i));
    }
    if let Some(s) = v.as_str() {
        return s.parse::<BigInt>().map_err(|e| Error::BadInput(format!("integer {s}: {e}")));
    }
    Err(Error::BadInput(format!("integer expected, got {v}")))
}

fn parse_ratio(v: &Value) -> Result<BigRational> {
    match v.as_array() {
        Some(a) if a.len() == 2 => {
            let (p, q) = (parse_int(&a[0])?, parse_int(&a[1])?);
            if q.is_zero() {
                return Err(Error::BadInput("zero denominator".into()));
            }
            Ok(BigRational::new(p, q))
        }
        _ => parse_int(v).map(BigRational::from_integer),
    }
}

pub fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

pub fn ratio_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        let shift = q.numer().bits() as i64 - q.denom().bits() as i64;
        if shift > 0 {
            f64::INFINITY * if q.is_negative() { -1.0 } else { 1.0 }
        } else {
            0.0
        }
    })
}

fn f64_ulp(x: f64) -> f64 {
    if x == 0.0 {
        f64::MIN_POSITIVE
    } else {
        let b = x.abs().to_bits();
        f64::from_bits(b + 1) - x.abs()
    }
}

fn pow_rat(q: &BigRational, k: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..k {
        acc *= q;
    }
    acc
}

/// Partial sum `Σ_{n≤terms} base^{-n!}` as an exact rational.
pub fn liouville_partial_sum(base: u32, terms: u32) -> BigRational {
    let b = BigInt::from(base);
    let mut acc = BigRational::zero();
    for n in 1..=terms {
        acc += BigRational::new(BigInt::one(), num_traits::pow(b.clone(), factorial(n) as usize));
    }
    acc
}

/// Enclosure of `λ_base` of width below `2^{-bits}`; the tail after `n` terms is below `2·base^{-(n+1)!}`.
pub fn liouville_interval(base: u32, bits: u32) -> (BigRational, BigRational) {
    let lb = (base as f64).log2();
    let mut n = 1u32;
    while (factorial(n + 1) as f64) * lb < bits as f64 + 2.0 {
        n += 1;
    }
    let s = liouville_partial_sum(base, n);
    let tail = BigRational::new(BigInt::from(2), num_traits::pow(BigInt::from(base), factorial(n + 1) as usize));
    (s.clone(), s + tail)
}

/// `⌊q⌋` for a big rational.
pub fn floor_rat(q: &BigRational) -> BigInt {
    q.numer().div_floor(q.denom())
}

pub fn sign_of(q: &BigRational) -> Sign {
    q.numer().sign()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_field_arithmetic() {
        let s2 = Exact::quad(2, rat(0, 1), rat(1, 1)).unwrap();
        assert_eq!(s2.class(), ArithClass::QuadraticIrrational);
        assert_eq!(s2.pow(2).as_rational(), Some(rat(2, 1)));
        let s8 = Exact::quad(8, rat(0, 1), rat(1, 1)).unwrap();
        assert_eq!(s8, Exact::quad(2, rat(0, 1), rat(2, 1)).unwrap());
        assert_eq!(Exact::quad(9, rat(1, 1), rat(1, 1)).unwrap().as_rational(), Some(rat(4, 1)));
        let golden = Exact::quad(5, rat(1, 2), rat(1, 2)).unwrap();
        let g2 = golden.pow(2).sub(&golden);
        assert_eq!(g2.as_rational(), Some(rat(1, 1)));
    }

    #[test]
    fn intervals_enclose() {
        let s2 = Exact::quad(2, rat(0, 1), rat(1, 1)).unwrap();
        let (lo, hi) = s2.interval(200);
        assert!(&lo * &lo < rat(2, 1) && &hi * &hi > rat(2, 1));
        assert!(&hi - &lo <= BigRational::new(BigInt::one(), BigInt::one() << 200));
        let (lo, hi) = Exact::liouville(10).interval(100);
        assert!(lo < hi && ratio_f64(&lo) > 0.11 && ratio_f64(&hi) < 0.1100011);
    }

    #[test]
    fn liouville_tags_survive_rational_scaling() {
        let l = Exact::liouville(10).pow(3).mul(&Exact::rational(rat(3, 2))).unwrap();
        assert_eq!(l.class(), ArithClass::LiouvilleConstructed);
        assert_eq!(Exact::from_f64(0.5).class(), ArithClass::Unknown);
        assert_eq!(Exact::from_f64(3.0).class(), ArithClass::Rational);
    }
}
