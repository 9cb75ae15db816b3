//! Continued fractions, irrationality exponents, Liouville constants and
//! the integer sequences `q̃τ^q = p̃ξ^ℓ` behind the resonance certificates.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exact::{factorial, floor_rat, ArithClass, Exact};

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFraction {
    pub quotients: Vec<BigInt>,
    pub convergents: Vec<(BigInt, BigInt)>,
    /// The expansion reached the exact value (rational input).
    pub terminated: bool,
}

impl ContinuedFraction {
    fn push(&mut self, a: BigInt) {
        let k = self.convergents.len();
        let (p, q) = match k {
            0 => (a.clone(), BigInt::one()),
            1 => {
                let (p0, _) = &self.convergents[0];
                (&a * p0 + 1, a.clone())
            }
            _ => {
                let (p1, q1) = &self.convergents[k - 1];
                let (p0, q0) = &self.convergents[k - 2];
                (&a * p1 + p0, &a * q1 + q0)
            }
        };
        self.quotients.push(a);
        self.convergents.push((p, q));
    }
}

/// Euclid expansion of an exact rational.
fn rational_cf(x: &BigRational, max_terms: usize) -> (Vec<BigInt>, bool) {
    let (mut n, mut d) = (x.numer().clone(), x.denom().clone());
    let mut out = Vec::new();
    while out.len() < max_terms {
        let (a, r) = n.div_mod_floor(&d);
        out.push(a);
        if r.is_zero() {
            return (out, true);
        }
        n = d;
        d = r;
    }
    (out, false)
}

/// Continued fraction of any real inside `[lo, hi]`: the common prefix of both expansions.
pub fn continued_fraction_interval(lo: &BigRational, hi: &BigRational, max_terms: usize) -> Result<ContinuedFraction> {
    let (a, ta) = rational_cf(lo, max_terms + 1);
    let mut cf = ContinuedFraction { quotients: vec![], convergents: vec![], terminated: false };
    if lo == hi {
        for q in a.into_iter().take(max_terms) {
            cf.push(q);
        }
        cf.terminated = ta && cf.quotients.len() <= max_terms && {
            let (p, q) = cf.convergents.last().expect("nonempty");
            BigRational::new(p.clone(), q.clone()) == *lo
        };
        return Ok(cf);
    }
    let (b, _) = rational_cf(hi, max_terms + 1);
    // a prefix is certified when the next quotient also agrees (so both ends share the cylinder)
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let certified = common.saturating_sub(1).min(max_terms);
    for q in a.into_iter().take(certified) {
        cf.push(q);
    }
    if certified < max_terms {
        return Err(Error::PrecisionExhausted { certified });
    }
    Ok(cf)
}

/// Continued fraction of a tagged constant computed at `bits` of precision.
pub fn continued_fraction(x: &Exact, max_terms: usize, bits: u32) -> Result<ContinuedFraction> {
    let (lo, hi) = x.interval(bits);
    continued_fraction_interval(&lo, &hi, max_terms)
}

/// Longest certified prefix, never failing.
pub fn certified_prefix(lo: &BigRational, hi: &BigRational, max_terms: usize) -> ContinuedFraction {
    match continued_fraction_interval(lo, hi, max_terms) {
        Ok(cf) => cf,
        Err(Error::PrecisionExhausted { certified }) => {
            continued_fraction_interval(lo, hi, certified).expect("certified prefix")
        }
        Err(_) => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExponentFlag {
    LiouvilleSuspect,
    BoundedExponent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentRow {
    pub k: usize,
    pub a: BigInt,
    pub p: BigInt,
    pub q: BigInt,
    /// `None` for `q = 1` or when the distance is not certified.
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentEstimate {
    pub rows: Vec<ExponentRow>,
    pub mu_hat: Option<f64>,
    pub flag: ExponentFlag,
    pub note: String,
    pub qmax: BigInt,
    pub threshold: f64,
}

impl ExponentEstimate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mu_hat": self.mu_hat,
            "flag": self.flag,
            "note": self.note,
            "qmax": self.qmax.to_string(),
            "threshold": self.threshold,
            "rows": self.rows.iter().map(|r| serde_json::json!({
                "k": r.k, "a": r.a.to_string(), "p": r.p.to_string(), "q": r.q.to_string(), "mu": r.mu
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,a_k,p_k,q_k,mu_k\n");
        for r in &self.rows {
            let mu = r.mu.map(|m| format!("{m:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.k, r.a, r.p, r.q, mu);
        }
        s
    }
}

/// Natural log of a positive big rational.
pub fn ln_rat(x: &BigRational) -> f64 {
    ln_int(x.numer()) - ln_int(x.denom())
}

pub fn ln_int(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).abs().ln();
    }
    let shift = bits - 64;
    let top: BigInt = n.abs() >> shift as usize;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// A constant together with the precision its enclosure is computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedConstant {
    pub exact: Exact,
    pub bits: u32,
    /// Number of Liouville terms recorded when built by `liouville_constant`.
    pub truncation: Option<u32>,
}

impl TaggedConstant {
    pub fn new(exact: Exact, bits: u32) -> Self {
        Self { exact, bits, truncation: None }
    }

    /// Exact partial sum for a truncated Liouville constant.
    pub fn partial_sum(&self) -> Option<BigRational> {
        match (&self.exact, self.truncation) {
            (Exact::Liouville { base, .. }, Some(n)) => Some(crate::exact::liouville_partial_sum(*base, n)),
            _ => None,
        }
    }
}

/// `Σ_{n≤terms} base^{-n!}` with precision `(terms+1)!·log₂(base) + 64` bits.
pub fn liouville_constant(terms: u32, base: u32) -> Result<TaggedConstant> {
    if !(1..=8).contains(&terms) || base < 2 {
        return Err(Error::BadInput(format!("liouville terms {terms} outside 1..=8 or base {base} < 2")));
    }
    let bits = factorial(terms + 1) as f64 * (base as f64).log2() + 64.0;
    if bits > 2.0e6 {
        return Err(Error::PrecisionExhausted { certified: terms as usize });
    }
    Ok(TaggedConstant { exact: Exact::liouville(base), bits: bits.ceil() as u32, truncation: Some(terms) })
}

/// Per-convergent exponents `μ_k = −log|x − p_k/q_k| / log q_k` for `q_k ≤ qmax`.
///
/// `μ̂` is the maximum over the tail `q_k ≥ √Q`, where `Q` is the largest scanned
/// denominator; the flag needs at least three scanned convergents.
pub fn irrationality_exponent(x: &TaggedConstant, qmax: &BigInt, threshold: f64) -> Result<ExponentEstimate> {
    let mut est = ExponentEstimate {
        rows: vec![],
        mu_hat: None,
        flag: ExponentFlag::Inconclusive,
        note: String::new(),
        qmax: qmax.clone(),
        threshold,
    };
    if x.exact.class() == ArithClass::Rational {
        est.note = "rational".into();
        return Ok(est);
    }
    let need = (4.0 * ln_int(qmax) / std::f64::consts::LN_2 + 64.0).ceil() as u32;
    let bits = match x.exact {
        Exact::Unknown(_) => x.bits,
        _ => x.bits.max(need),
    };
    let (lo, hi) = x.exact.interval(bits);
    let width = &hi - &lo;
    let mid = (&lo + &hi) / BigRational::from_integer(BigInt::from(2));
    let max_terms = (4 * bits as usize).max(16);
    let cf = certified_prefix(&lo, &hi, max_terms);
    for (k, ((p, q), a)) in cf.convergents.iter().zip(&cf.quotients).enumerate() {
        if q > qmax {
            break;
        }
        let dist = (&mid - BigRational::new(p.clone(), q.clone())).abs();
        let certified = !dist.is_zero() && width.clone() * BigRational::from_integer(BigInt::from(1024)) <= dist;
        let mu = if q.is_one() || !certified { None } else { Some(-ln_rat(&dist) / ln_int(q)) };
        if !certified && !q.is_one() {
            est.note = format!("distance uncertified from q = {q}");
            break;
        }
        est.rows.push(ExponentRow { k, a: a.clone(), p: p.clone(), q: q.clone(), mu });
    }
    let scored: Vec<(f64, f64)> = est.rows.iter().filter_map(|r| r.mu.map(|m| (ln_int(&r.q), m))).collect();
    if scored.is_empty() {
        return Err(Error::PrecisionExhausted { certified: cf.quotients.len() });
    }
    let top = scored.last().unwrap().0;
    est.mu_hat = scored.iter().filter(|(lq, _)| *lq >= 0.5 * top).map(|(_, m)| *m).fold(None, |acc: Option<f64>, m| {
        Some(acc.map_or(m, |a| a.max(m)))
    });
    est.flag = if est.rows.len() < 3 {
        ExponentFlag::Inconclusive
    } else if est.mu_hat.unwrap() >= threshold {
        ExponentFlag::LiouvilleSuspect
    } else {
        ExponentFlag::BoundedExponent
    };
    Ok(est)
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller–Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let (mut d, mut s) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn pollard_rho(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    for c in 1u64.. {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = x.abs_diff(y).gcd(&n);
        }
        if d != n {
            return d;
        }
    }
    unreachable!()
}

/// Prime factorization by trial division up to 10⁴, then Pollard rho.
pub fn factorize(n: &BigInt) -> Result<Vec<(u64, u32)>> {
    if n.is_negative() || n.is_zero() {
        return Err(Error::BadInput(format!("cannot factor {n}")));
    }
    let mut m = n.to_u64().ok_or_else(|| Error::FactorizationTooLarge(n.to_string()))?;
    let mut primes: Vec<u64> = Vec::new();
    let mut p = 2u64;
    while p <= 10_000 && p * p <= m {
        while m % p == 0 {
            primes.push(p);
            m /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let mut stack = vec![m];
    while let Some(x) = stack.pop() {
        if x == 1 {
            continue;
        }
        if is_prime(x) {
            primes.push(x);
        } else {
            let d = pollard_rho(x);
            stack.push(d);
            stack.push(x / d);
        }
    }
    primes.sort_unstable();
    let mut out: Vec<(u64, u32)> = Vec::new();
    for p in primes {
        match out.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => out.push((p, 1)),
        }
    }
    Ok(out)
}

/// Smallest `x ≥ 0` with `a·x ≡ g (mod m)` and `a·x − g ≥ 0`; returns `(x, (a·x − g)/m)`.
fn nonneg_solution(a: u64, m: u64, g: u64) -> (u64, u64) {
    let mut x = 0u64;
    loop {
        let ax = a * x;
        if ax >= g && (ax - g) % m == 0 {
            return (x, (ax - g) / m);
        }
        x += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSequence {
    pub p_tilde: BigInt,
    pub q_tilde: BigInt,
    pub ell: u32,
    pub q: u32,
    /// `∏qᵢ^{yᵢ}∏pⱼ^{vⱼ}`
    pub tau_factor: BigInt,
    /// `∏qᵢ^{xᵢ}∏pⱼ^{wⱼ}`
    pub xi_factor: BigInt,
}

impl PowerSequence {
    /// `(τ_n, ξ_n)`, checked against `q̃τ^q = p̃ξ^ℓ` in exact integers.
    pub fn pair(&self, n: u64) -> (BigInt, BigInt) {
        let nb = BigInt::from(n);
        let tau = num_traits::pow(nb.clone(), self.ell as usize) * &self.tau_factor;
        let xi = num_traits::pow(nb, self.q as usize) * &self.xi_factor;
        assert!(self.holds(&tau, &xi), "power sequence identity failed at n = {n}");
        (tau, xi)
    }

    pub fn holds(&self, tau: &BigInt, xi: &BigInt) -> bool {
        &self.q_tilde * num_traits::pow(tau.clone(), self.q as usize)
            == &self.p_tilde * num_traits::pow(xi.clone(), self.ell as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (BigInt, BigInt)> + '_ {
        (1u64..).map(move |n| self.pair(n))
    }
}

pub fn power_sequence(p_tilde: &BigInt, q_tilde: &BigInt, ell: u32, q: u32) -> Result<PowerSequence> {
    if ell == 0 || q == 0 || ell.gcd(&q) != 1 {
        return Err(Error::BadInput(format!("gcd({ell}, {q}) != 1")));
    }
    if !p_tilde.is_positive() || !q_tilde.is_positive() {
        return Err(Error::BadInput("p~ and q~ must be positive".into()));
    }
    let (l, qq) = (ell as u64, q as u64);
    let mut tau_factor = BigInt::one();
    let mut xi_factor = BigInt::one();
    for (prime, gamma) in factorize(q_tilde)? {
        let (x, y) = nonneg_solution(l, qq, gamma as u64);
        tau_factor *= num_traits::pow(BigInt::from(prime), y as usize);
        xi_factor *= num_traits::pow(BigInt::from(prime), x as usize);
    }
    for (prime, sigma) in factorize(p_tilde)? {
        let (v, w) = nonneg_solution(qq, l, sigma as u64);
        tau_factor *= num_traits::pow(BigInt::from(prime), v as usize);
        xi_factor *= num_traits::pow(BigInt::from(prime), w as usize);
    }
    Ok(PowerSequence { p_tilde: p_tilde.clone(), q_tilde: q_tilde.clone(), ell, q, tau_factor, xi_factor })
}

/// Smallest `p̂ ≥ 1` with `q̂ = (p̂ℓ − 1)/q` a positive integer.
pub fn multiplier_exponents(ell: u32, q: u32) -> Result<(u64, u64)> {
    if ell == 0 || q == 0 || ell.gcd(&q) != 1 {
        return Err(Error::BadInput(format!("gcd({ell}, {q}) != 1")));
    }
    let (l, qq) = (ell as u64, q as u64);
    let mut p = 1u64;
    loop {
        let v = p * l;
        if v > 1 && (v - 1) % qq == 0 && (v - 1) / qq >= 1 {
            return Ok((p, (v - 1) / qq));
        }
        p += 1;
    }
}

/// `⌊x⌋` of a tagged constant, certified from its enclosure.
pub fn certified_floor(x: &Exact, bits: u32) -> Option<BigInt> {
    let (lo, hi) = x.interval(bits);
    let (a, b) = (floor_rat(&lo), floor_rat(&hi));
    (a == b).then_some(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn sqrt2_expansion() {
        let s2 = Exact::quad(2, rat(0, 1), rat(1, 1)).unwrap();
        let cf = continued_fraction(&s2, 6, 256).unwrap();
        assert_eq!(cf.quotients, ints(&[1, 2, 2, 2, 2, 2]));
        let conv: Vec<(i64, i64)> =
            cf.convergents.iter().map(|(p, q)| (p.to_i64().unwrap(), q.to_i64().unwrap())).collect();
        assert_eq!(conv, vec![(1, 1), (3, 2), (7, 5), (17, 12), (41, 29), (99, 70)]);
    }

    #[test]
    fn rational_terminates() {
        let cf = continued_fraction(&Exact::rational(rat(3, 7)), 10, 64).unwrap();
        assert_eq!(cf.quotients, ints(&[0, 2, 3]));
        assert!(cf.terminated);
        assert_eq!(cf.convergents.last().unwrap(), &(BigInt::from(3), BigInt::from(7)));
    }

    #[test]
    fn golden_ratio_all_ones() {
        let g = Exact::quad(5, rat(1, 2), rat(1, 2)).unwrap();
        let cf = continued_fraction(&g, 40, 256).unwrap();
        assert!(cf.quotients.iter().all(|a| a.is_one()));
    }

    #[test]
    fn precision_runs_out() {
        let s2 = Exact::quad(2, rat(0, 1), rat(1, 1)).unwrap();
        match continued_fraction(&s2, 500, 64) {
            Err(Error::PrecisionExhausted { certified }) => assert!(certified > 20 && certified < 500),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn liouville_partial_sums() {
        let l3 = liouville_constant(3, 10).unwrap();
        assert_eq!(l3.partial_sum().unwrap(), rat(110001, 1000000));
        assert_eq!(liouville_constant(1, 10).unwrap().partial_sum().unwrap(), rat(1, 10));
        let (s4, s5) = (
            liouville_constant(4, 10).unwrap().partial_sum().unwrap(),
            liouville_constant(5, 10).unwrap().partial_sum().unwrap(),
        );
        let gap = s5 - s4;
        assert_eq!(gap, BigRational::new(BigInt::one(), num_traits::pow(BigInt::from(10), 120)));
        assert!(liouville_constant(9, 10).is_err());
    }

    #[test]
    fn exponents() {
        let s2 = TaggedConstant::new(Exact::quad(2, rat(0, 1), rat(1, 1)).unwrap(), 256);
        let e = irrationality_exponent(&s2, &BigInt::from(10u64.pow(12)), 10.0).unwrap();
        let mu = e.mu_hat.unwrap();
        assert!((1.9..=2.1).contains(&mu), "{mu}");
        assert_eq!(e.flag, ExponentFlag::BoundedExponent);
        assert!(e.rows.iter().filter_map(|r| r.mu).all(|m| m >= 1.0));
        let r = TaggedConstant::new(Exact::rational(rat(22, 7)), 64);
        let e = irrationality_exponent(&r, &BigInt::from(1000), 10.0).unwrap();
        assert_eq!((e.flag, e.note.as_str()), (ExponentFlag::Inconclusive, "rational"));
    }

    #[test]
    fn liouville_exponents_grow() {
        let l = liouville_constant(5, 10).unwrap();
        let qmax = num_traits::pow(BigInt::from(10), 120);
        let e = irrationality_exponent(&l, &qmax, 5.0).unwrap();
        // μ_k ≥ k at the denominators 10^{k!}
        for k in 2..=5u32 {
            let qk = num_traits::pow(BigInt::from(10), factorial(k) as usize);
            let row = e.rows.iter().find(|r| r.q == qk).expect("denominator 10^{k!} is a convergent");
            assert!(row.mu.unwrap() >= k as f64 - 1e-9, "k={k} mu={:?}", row.mu);
        }
        assert!(e.mu_hat.unwrap() >= 5.0);
        assert_eq!(e.flag, ExponentFlag::LiouvilleSuspect);
    }

    #[test]
    fn power_sequences() {
        let s = power_sequence(&BigInt::from(2), &BigInt::from(1), 1, 2).unwrap();
        assert_eq!(s.pair(3), (BigInt::from(6), BigInt::from(18)));
        let s = power_sequence(&BigInt::one(), &BigInt::one(), 3, 5).unwrap();
        assert_eq!(s.pair(2), (BigInt::from(8), BigInt::from(32)));
        let s = power_sequence(&BigInt::from(3), &BigInt::from(2), 2, 3).unwrap();
        for n in 1..=10 {
            let (t, x) = s.pair(n);
            assert_eq!(BigInt::from(2) * &t * &t * &t, BigInt::from(3) * &x * &x);
        }
        assert!(matches!(power_sequence(&BigInt::one(), &BigInt::one(), 2, 4), Err(Error::BadInput(_))));
        let big = BigInt::one() << 70;
        assert!(matches!(power_sequence(&big, &BigInt::one(), 1, 2), Err(Error::FactorizationTooLarge(_))));
    }

    #[test]
    fn multipliers() {
        assert_eq!(multiplier_exponents(1, 2).unwrap(), (3, 1));
        assert_eq!(multiplier_exponents(3, 2).unwrap(), (1, 1));
        assert_eq!(multiplier_exponents(1, 1).unwrap(), (2, 1));
        assert!(multiplier_exponents(2, 2).is_err());
    }

    #[test]
    fn factorization() {
        let n = BigInt::from(600851475143u64);
        assert_eq!(factorize(&n).unwrap(), vec![(71, 1), (839, 1), (1471, 1), (6857, 1)]);
        let p = BigInt::from(18446744073709551557u64);
        assert_eq!(factorize(&p).unwrap(), vec![(18446744073709551557, 1)]);
        let semi = BigInt::from(4294967291u64 * 4294967279u64);
        assert_eq!(factorize(&semi).unwrap(), vec![(4294967279, 1), (4294967291, 1)]);
    }
}
