//! Toroidal symbols `p(ξ) = α(ξ) + iβ(ξ)` on `Zᴺ`.
//!
//! Symbols are expression trees parsed from a small infix grammar:
//! `xi1..xiN`, `absxi`, `i`, numbers, named constants, `+ - * /`,
//! `pow(b, e)`, `log1p(x)`, `abs(x)`, `sqrt(x)`, `exp(x)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::exact::Exact;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(String, f64),
    Xi(usize),
    AbsXi,
    I,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Log1p(Box<Expr>),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
    Exp(Box<Expr>),
}

/// Declared homogeneity `p(ξ) = |ξ|^m p(ξ/|ξ|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Homogeneity {
    pub degree: Exact,
    /// `p(1)` and `p(−1)` as tagged `(re, im)` pairs; only for `N = 1`.
    pub p_plus: Option<(Exact, Exact)>,
    pub p_minus: Option<(Exact, Exact)>,
    /// User-declared tags for `(a₀α − b₀β)^q` on the `+1` and `−1` sides.
    pub power_tag_plus: Option<Exact>,
    pub power_tag_minus: Option<Exact>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSpec {
    pub expr: Expr,
    pub dim: usize,
    pub text: String,
    pub order_hint: Option<f64>,
    pub homogeneity: Option<Homogeneity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    consts: &'a BTreeMap<String, Exact>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let before = &self.src[..self.pos.min(self.src.len())];
        let line = before.iter().filter(|&&c| c == b'\n').count() + 1;
        let column = before.iter().rev().take_while(|&&c| c != b'\n').count() + 1;
        Err(Error::Parse { line, column, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() {
                    let c = self.src[self.pos];
                    let exp_sign = (c == b'-' || c == b'+')
                        && self.pos > start
                        && matches!(self.src[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match s.parse::<f64>() {
                    Ok(v) => Ok(Expr::Num(v)),
                    Err(_) => {
                        self.pos = start;
                        self.err(format!("bad number '{s}'"))
                    }
                }
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
                match name.as_str() {
                    "i" => Ok(Expr::I),
                    "absxi" => Ok(Expr::AbsXi),
                    "pow" => {
                        self.expect(b'(')?;
                        let b = self.expr()?;
                        self.expect(b',')?;
                        let e = self.expr()?;
                        self.expect(b')')?;
                        Ok(Expr::Pow(Box::new(b), Box::new(e)))
                    }
                    "log1p" | "abs" | "sqrt" | "exp" => {
                        self.expect(b'(')?;
                        let a = Box::new(self.expr()?);
                        self.expect(b')')?;
                        Ok(match name.as_str() {
                            "log1p" => Expr::Log1p(a),
                            "abs" => Expr::Abs(a),
                            "exp" => Expr::Exp(a),
                            _ => Expr::Sqrt(a),
                        })
                    }
                    _ if name.starts_with("xi") && name.len() > 2 && name[2..].bytes().all(|c| c.is_ascii_digit()) => {
                        let k: usize = name[2..].parse().unwrap();
                        if k == 0 || k > self.dim {
                            self.pos = start;
                            return self.err(format!("variable {name} outside dimension {}", self.dim));
                        }
                        Ok(Expr::Xi(k - 1))
                    }
                    _ => match self.consts.get(&name) {
                        Some(c) => Ok(Expr::Const(name, c.to_f64())),
                        None => {
                            self.pos = start;
                            self.err(format!("unknown identifier '{name}'"))
                        }
                    },
                }
            }
            Some(c) => self.err(format!("unexpected '{}'", c as char)),
            None => self.err("unexpected end of expression"),
        }
    }
}

pub fn parse_expr(text: &str, dim: usize, consts: &BTreeMap<String, Exact>) -> Result<Expr> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, dim, consts };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(e)
}

fn norm(xi: &[i64]) -> f64 {
    xi.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

impl Expr {
    pub fn eval(&self, xi: &[i64]) -> Result<Complex64> {
        let c = |x: f64| Complex64::new(x, 0.0);
        Ok(match self {
            Expr::Num(v) | Expr::Const(_, v) => c(*v),
            Expr::Xi(k) => c(xi[*k] as f64),
            Expr::AbsXi => c(norm(xi)),
            Expr::I => Complex64::i(),
            Expr::Neg(a) => -a.eval(xi)?,
            Expr::Add(a, b) => a.eval(xi)? + b.eval(xi)?,
            Expr::Sub(a, b) => a.eval(xi)? - b.eval(xi)?,
            Expr::Mul(a, b) => a.eval(xi)? * b.eval(xi)?,
            Expr::Div(a, b) => {
                let d = b.eval(xi)?;
                if d.norm() == 0.0 {
                    return Err(Error::EvalDomain(format!("division by zero at {xi:?}")));
                }
                a.eval(xi)? / d
            }
            Expr::Pow(a, b) => {
                let (x, e) = (a.eval(xi)?, b.eval(xi)?);
                if e.im != 0.0 {
                    return Err(Error::EvalDomain(format!("complex exponent at {xi:?}")));
                }
                let e = e.re;
                if x.im == 0.0 {
                    let v = x.re;
                    if v == 0.0 && e < 0.0 {
                        return Err(Error::EvalDomain(format!("pow(0, {e}) at {xi:?}")));
                    }
                    if v < 0.0 && e.fract() != 0.0 {
                        return Err(Error::EvalDomain(format!("pow({v}, {e}) at {xi:?}")));
                    }
                    c(v.powf(e))
                } else if e.fract() == 0.0 && e.abs() < 64.0 {
                    x.powi(e as i32)
                } else {
                    return Err(Error::EvalDomain(format!("complex base with fractional exponent at {xi:?}")));
                }
            }
            Expr::Log1p(a) => {
                let x = a.eval(xi)?;
                if x.im != 0.0 || x.re <= -1.0 {
                    return Err(Error::EvalDomain(format!("log1p({x}) at {xi:?}")));
                }
                c(x.re.ln_1p())
            }
            Expr::Abs(a) => c(a.eval(xi)?.norm()),
            Expr::Sqrt(a) => {
                let x = a.eval(xi)?;
                if x.im != 0.0 || x.re < 0.0 {
                    return Err(Error::EvalDomain(format!("sqrt({x}) at {xi:?}")));
                }
                c(x.re.sqrt())
            }
            Expr::Exp(a) => a.eval(xi)?.exp(),
        })
    }

    fn uses_signed_vars(&self) -> bool {
        match self {
            Expr::Xi(_) => true,
            Expr::Num(_) | Expr::Const(..) | Expr::AbsXi | Expr::I => false,
            Expr::Neg(a) | Expr::Log1p(a) | Expr::Abs(a) | Expr::Sqrt(a) | Expr::Exp(a) => a.uses_signed_vars(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses_signed_vars() || b.uses_signed_vars()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Asymptotic expansion in |ξ| → ∞ along one sign of ξ (N = 1) or radially (absxi only).
// A value is Σ c·|ξ|^s·L^j (L = log(1+|ξ|)) plus a remainder O(|ξ|^{rs}L^{rj}).

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mono {
    c: Complex64,
    s: f64,
    j: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Asym {
    terms: Vec<Mono>,
    rem: Option<(f64, f64)>,
}

const MAX_TERMS: usize = 8;

fn ord_gt(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 + 1e-12 || ((a.0 - b.0).abs() <= 1e-12 && a.1 > b.1 + 1e-12)
}

fn ord_max(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> Option<(f64, f64)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(if ord_gt(x, y) { x } else { y }),
    }
}

impl Asym {
    fn constant(c: Complex64) -> Self {
        let terms = if c.norm() == 0.0 { vec![] } else { vec![Mono { c, s: 0.0, j: 0.0 }] };
        Asym { terms, rem: None }
    }

    fn normalize(mut self) -> Self {
        let mut merged: Vec<Mono> = Vec::new();
        for t in self.terms {
            match merged.iter_mut().find(|m| (m.s - t.s).abs() <= 1e-12 && (m.j - t.j).abs() <= 1e-12) {
                Some(m) => m.c += t.c,
                None => merged.push(t),
            }
        }
        let scale = merged.iter().map(|m| m.c.norm()).fold(0.0, f64::max);
        merged.retain(|m| m.c.norm() > 1e-13 * scale.max(1e-300));
        merged.sort_by(|a, b| if ord_gt((a.s, a.j), (b.s, b.j)) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
        if let Some(r) = self.rem {
            merged.retain(|m| ord_gt((m.s, m.j), r));
        }
        if merged.len() > MAX_TERMS {
            let cut = merged[MAX_TERMS];
            self.rem = ord_max(self.rem, Some((cut.s, cut.j)));
            merged.truncate(MAX_TERMS);
        }
        self.terms = merged;
        self
    }

    fn lead(&self) -> Option<Mono> {
        self.terms.first().copied()
    }

    fn add(self, o: Asym) -> Asym {
        let mut terms = self.terms;
        terms.extend(o.terms);
        Asym { terms, rem: ord_max(self.rem, o.rem) }.normalize()
    }

    fn scale(self, c: Complex64) -> Asym {
        Asym { terms: self.terms.into_iter().map(|m| Mono { c: m.c * c, ..m }).collect(), rem: self.rem }.normalize()
    }

    fn mul(self, o: Asym) -> Asym {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &o.terms {
                terms.push(Mono { c: a.c * b.c, s: a.s + b.s, j: a.j + b.j });
            }
        }
        let cross = |r: Option<(f64, f64)>, other: &Asym| -> Option<(f64, f64)> {
            let r = r?;
            let top = other.lead().map(|m| (m.s, m.j));
            let top = ord_max(top, other.rem)?;
            Some((r.0 + top.0, r.1 + top.1))
        };
        let rem = ord_max(cross(self.rem, &o), cross(o.rem, &self));
        Asym { terms, rem }.normalize()
    }

    /// Leading-term-only power for a base whose lead coefficient is real positive.
    fn powf(self, e: f64) -> Option<Asym> {
        if self.terms.is_empty() {
            return None;
        }
        if self.terms.len() == 1 && self.rem.is_none() {
            let m = self.terms[0];
            if m.c.im == 0.0 && m.c.re > 0.0 {
                return Some(Asym { terms: vec![Mono { c: Complex64::new(m.c.re.powf(e), 0.0), s: m.s * e, j: m.j * e }], rem: None });
            }
            if e.fract() == 0.0 && e.abs() < 64.0 {
                return Some(Asym { terms: vec![Mono { c: m.c.powi(e as i32), s: m.s * e, j: m.j * e }], rem: None });
            }
            return None;
        }
        let m = self.lead()?;
        if m.c.im != 0.0 || m.c.re <= 0.0 {
            return None;
        }
        // (c x^s L^j)^e (1 + δ)^e with δ of strictly lower order
        let second = ord_max(self.terms.get(1).map(|t| (t.s, t.j)), self.rem)?;
        let gap = (second.0 - m.s, second.1 - m.j);
        let lead = Mono { c: Complex64::new(m.c.re.powf(e), 0.0), s: m.s * e, j: m.j * e };
        Some(Asym { terms: vec![lead], rem: Some((lead.s + gap.0, lead.j + gap.1)) })
    }
}

fn asym(e: &Expr, sign: f64) -> Option<Asym> {
    let r = |x: f64| Complex64::new(x, 0.0);
    Some(match e {
        Expr::Num(v) | Expr::Const(_, v) => Asym::constant(r(*v)),
        Expr::I => Asym::constant(Complex64::i()),
        Expr::AbsXi => Asym { terms: vec![Mono { c: r(1.0), s: 1.0, j: 0.0 }], rem: None },
        Expr::Xi(_) => Asym { terms: vec![Mono { c: r(sign), s: 1.0, j: 0.0 }], rem: None },
        Expr::Neg(a) => asym(a, sign)?.scale(r(-1.0)),
        Expr::Add(a, b) => asym(a, sign)?.add(asym(b, sign)?),
        Expr::Sub(a, b) => asym(a, sign)?.add(asym(b, sign)?.scale(r(-1.0))),
        Expr::Mul(a, b) => asym(a, sign)?.mul(asym(b, sign)?),
        Expr::Div(a, b) => asym(a, sign)?.mul(asym(b, sign)?.powf(-1.0)?),
        Expr::Pow(a, b) => {
            let eb = asym(b, sign)?;
            if eb.rem.is_some() || eb.terms.len() > 1 || eb.terms.first().is_some_and(|m| m.s != 0.0 || m.j != 0.0 || m.c.im != 0.0) {
                return None;
            }
            let ex = eb.terms.first().map_or(0.0, |m| m.c.re);
            if ex == 0.0 {
                return Some(Asym::constant(r(1.0)));
            }
            asym(a, sign)?.powf(ex)?
        }
        Expr::Sqrt(a) => asym(a, sign)?.powf(0.5)?,
        Expr::Exp(_) => return None,
        Expr::Abs(a) => {
            let x = asym(a, sign)?;
            let m = x.lead()?;
            let mut out = x.clone();
            if m.c.im == 0.0 && x.terms.iter().all(|t| t.c.im == 0.0) {
                if m.c.re < 0.0 {
                    out = out.scale(r(-1.0));
                }
                out
            } else {
                let second = ord_max(x.terms.get(1).map(|t| (t.s, t.j)), x.rem);
                Asym { terms: vec![Mono { c: r(m.c.norm()), s: m.s, j: m.j }], rem: second }
            }
        }
        Expr::Log1p(a) => {
            let x = asym(a, sign)?;
            if x.terms.len() == 1 && x.rem.is_none() && x.terms[0] == (Mono { c: r(1.0), s: 1.0, j: 0.0 }) {
                return Some(Asym { terms: vec![Mono { c: r(1.0), s: 0.0, j: 1.0 }], rem: None });
            }
            let m = x.lead()?;
            if m.c.im != 0.0 {
                return None;
            }
            if m.s > 0.0 && m.c.re > 0.0 {
                // log(c x^s L^j (1+δ)) = s·L + O(log L)
                Asym { terms: vec![Mono { c: r(m.s), s: 0.0, j: 1.0 }], rem: Some((0.0, 0.5)) }
            } else if m.s < 0.0 || (m.s == 0.0 && m.j < 0.0) {
                // log1p of a vanishing quantity is of the same order
                x
            } else {
                return None;
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GrowthKind {
    AtMostLog { kappa: f64, n0: u64 },
    SuperLog { witnesses: Vec<u32> },
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthClass {
    pub kind: GrowthKind,
    /// Per dyadic shell `k`: max of `|r(ξ)|/log|ξ|` over `2^k ≤ |ξ| < 2^{k+1}`.
    pub evidence: Vec<(u32, f64)>,
    /// `true` when decided by the symbolic expansion rather than the shell scan.
    pub symbolic: bool,
    pub ximax: u64,
}

impl GrowthClass {
    pub fn is_log(&self) -> bool {
        matches!(self.kind, GrowthKind::AtMostLog { .. })
    }

    pub fn is_super(&self) -> bool {
        matches!(self.kind, GrowthKind::SuperLog { .. })
    }
}

/// Asymptotic order class of one part: `Some(true)` super-log, `Some(false)` at most log.
fn symbolic_growth(expr: &Expr, dim: usize, part: Part) -> Option<bool> {
    let signs: &[f64] = if expr.uses_signed_vars() {
        if dim != 1 {
            return None;
        }
        &[1.0, -1.0]
    } else {
        &[1.0]
    };
    let mut sup = false;
    for &sg in signs {
        let a = asym(expr, sg)?;
        let pick = |m: &Mono| match part {
            Part::Re => m.c.re,
            Part::Im => m.c.im,
        };
        let lead = a.terms.iter().find(|m| pick(m).abs() > 1e-13 * m.c.norm());
        let is_super = |o: (f64, f64)| o.0 > 1e-12 || (o.0.abs() <= 1e-12 && o.1 > 1.0 + 1e-12);
        match (lead, a.rem) {
            (Some(m), rem) if rem.is_none_or(|r| ord_gt((m.s, m.j), r)) => sup |= is_super((m.s, m.j)),
            (_, Some(r)) if !is_super(r) => {}
            (None, None) => {}
            _ => return None,
        }
    }
    Some(sup)
}

impl SymbolSpec {
    pub fn parse(text: &str, dim: usize, consts: &BTreeMap<String, Exact>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadInput("dimension must be >= 1".into()));
        }
        Ok(Self { expr: parse_expr(text, dim, consts)?, dim, text: text.to_string(), order_hint: None, homogeneity: None })
    }

    pub fn eval(&self, xi: &[i64]) -> Result<Complex64> {
        self.expr.eval(xi)
    }

    pub fn part(&self, xi: &[i64], part: Part) -> Result<f64> {
        let z = self.eval(xi)?;
        Ok(match part {
            Part::Re => z.re,
            Part::Im => z.im,
        })
    }

    /// Lattice points of the dyadic shell `2^k ≤ |ξ| < 2^{k+1}` (sampled when `N ≥ 2`).
    pub fn shell_points(&self, k: u32, samples: usize, seed: u64) -> Vec<Vec<i64>> {
        shell_points(self.dim, k, samples, seed)
    }

    pub fn classify_growth(&self, part: Part, ximax: u64, samples: usize, seed: u64) -> GrowthClass {
        let evidence = self.shell_ratios(part, ximax, samples, seed);
        if let Some(sup) = symbolic_growth(&self.expr, self.dim, part) {
            let kind = if sup {
                GrowthKind::SuperLog { witnesses: evidence.iter().map(|e| e.0).collect() }
            } else {
                let kappa = evidence.iter().map(|e| e.1).fold(0.0, f64::max);
                GrowthKind::AtMostLog { kappa, n0: 2 }
            };
            return GrowthClass { kind, evidence, symbolic: true, ximax };
        }
        let kind = numeric_growth(&evidence);
        GrowthClass { kind, evidence, symbolic: false, ximax }
    }

    fn shell_ratios(&self, part: Part, ximax: u64, samples: usize, seed: u64) -> Vec<(u32, f64)> {
        let top = shells_up_to(ximax);
        (1..=top)
            .map(|k| {
                let m = self
                    .shell_points(k, samples, seed)
                    .iter()
                    .filter(|xi| norm(xi) <= ximax as f64)
                    .filter_map(|xi| self.part(xi, part).ok().map(|v| v.abs() / norm(xi).ln()))
                    .fold(0.0, f64::max);
                (k, m)
            })
            .collect()
    }

    /// Clusters of `α/β` over the top shells among points with `|β(ξ)| ≥ k·log|ξ|`.
    pub fn ratio_accumulation(
        &self,
        num: Part,
        ximax: u64,
        shells: u32,
        width: f64,
        samples: usize,
        seed: u64,
    ) -> Result<Vec<RatioCluster>> {
        let den = match num {
            Part::Re => Part::Im,
            Part::Im => Part::Re,
        };
        let top = shells_up_to(ximax);
        let mut vals: Vec<(f64, f64)> = Vec::new();
        for k in top.saturating_sub(shells.max(1) - 1).max(1)..=top {
            for xi in self.shell_points(k, samples, seed) {
                let r = norm(&xi);
                if r > ximax as f64 {
                    continue;
                }
                let z = match self.eval(&xi) {
                    Ok(z) => z,
                    Err(_) => continue,
                };
                let (n, d) = match num {
                    Part::Re => (z.re, z.im),
                    Part::Im => (z.im, z.re),
                };
                let _ = den;
                if d.abs() >= k as f64 * r.ln() && d != 0.0 {
                    vals.push((n / d, r));
                }
            }
        }
        if vals.is_empty() {
            return Err(Error::NoWitnesses);
        }
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut clusters: Vec<RatioCluster> = Vec::new();
        let mut start = 0;
        for i in 1..=vals.len() {
            if i == vals.len() || vals[i].0 - vals[i - 1].0 > width {
                let chunk = &vals[start..i];
                let tail = chunk.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
                clusters.push(RatioCluster {
                    k: tail.0,
                    mean: chunk.iter().map(|v| v.0).sum::<f64>() / chunk.len() as f64,
                    lo: chunk[0].0,
                    hi: chunk[chunk.len() - 1].0,
                    count: chunk.len(),
                    max_radius: tail.1,
                });
                start = i;
            }
        }
        clusters.sort_by(|a, b| b.count.cmp(&a.count).then(a.lo.partial_cmp(&b.lo).unwrap()));
        Ok(clusters)
    }

    /// `α = o(β)` at finite range: the per-shell max of `|α|/|β|` decreases over the
    /// top four shells and its value, or its linear extrapolation in `1/k`, is below `tol`.
    pub fn little_o(&self, num: Part, ximax: u64, tol: f64, samples: usize, seed: u64) -> bool {
        let top = shells_up_to(ximax);
        let ratios: Vec<(u32, f64)> = (1..=top)
            .map(|k| {
                let m = self
                    .shell_points(k, samples, seed)
                    .iter()
                    .filter(|xi| norm(xi) <= ximax as f64)
                    .filter_map(|xi| self.eval(xi).ok())
                    .map(|z| {
                        let (n, d) = match num {
                            Part::Re => (z.re, z.im),
                            Part::Im => (z.im, z.re),
                        };
                        if n == 0.0 {
                            0.0
                        } else if d == 0.0 {
                            f64::INFINITY
                        } else {
                            (n / d).abs()
                        }
                    })
                    .fold(0.0, f64::max);
                (k, m)
            })
            .collect();
        if ratios.len() < 4 {
            return false;
        }
        let last4 = &ratios[ratios.len() - 4..];
        if last4.iter().all(|r| r.1 == 0.0) {
            return true;
        }
        let decreasing = last4.windows(2).all(|w| w[1].1 < w[0].1);
        if !decreasing {
            return false;
        }
        let last = last4[3].1;
        if last < tol {
            return true;
        }
        // r_k ≈ r_∞ + c/k
        let xs: Vec<f64> = last4.iter().map(|r| 1.0 / r.0 as f64).collect();
        let ys: Vec<f64> = last4.iter().map(|r| r.1).collect();
        let (_, intercept) = linear_fit(&xs, &ys);
        intercept < tol
    }

    /// Least-squares slope of `log max_shell |p|` against `log |ξ|` at the maximizer.
    pub fn order_estimate(&self, ximax: u64, samples: usize, seed: u64) -> f64 {
        let top = shells_up_to(ximax);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 2..=top {
            let best = self
                .shell_points(k, samples, seed)
                .iter()
                .filter(|xi| norm(xi) <= ximax as f64)
                .filter_map(|xi| self.eval(xi).ok().map(|z| (z.norm(), norm(xi))))
                .filter(|v| v.0 > 0.0)
                .fold((0.0, 0.0), |b, v| if v.0 > b.0 { v } else { b });
            if best.0 > 0.0 {
                xs.push(best.1.ln());
                ys.push(best.0.ln());
            }
        }
        if xs.len() < 2 {
            return 0.0;
        }
        linear_fit(&xs, &ys).0
    }

    /// `p(nξ) = n^m p(ξ)` for `1 ≤ |ξ| ≤ 64`, `n ∈ {1,2,3}`, and the declared boundary values.
    pub fn check_homogeneity(&self, samples: usize, seed: u64) -> Result<()> {
        let h = match &self.homogeneity {
            Some(h) => h,
            None => return Ok(()),
        };
        let m = h.degree.to_f64();
        let tol = if self.dim == 1 { 1e-12 } else { 1e-10 };
        let mut pts: Vec<Vec<i64>> = Vec::new();
        for k in 0..=6 {
            pts.extend(shell_points(self.dim, k, samples.min(64), seed));
        }
        for xi in pts.iter().filter(|x| norm(x) <= 64.0) {
            let p1 = self.eval(xi)?;
            for n in [2i64, 3] {
                let scaled: Vec<i64> = xi.iter().map(|x| x * n).collect();
                let pn = self.eval(&scaled)?;
                let want = p1 * (n as f64).powf(m);
                if (pn - want).norm() > tol * want.norm().max(1e-300) + 1e-300 {
                    return Err(Error::BadInput(format!("symbol not homogeneous of degree {m} at {xi:?}")));
                }
            }
        }
        if self.dim == 1 {
            for (xi, decl) in [(1i64, &h.p_plus), (-1, &h.p_minus)] {
                if let Some((re, im)) = decl {
                    let z = self.eval(&[xi])?;
                    let d = Complex64::new(re.to_f64(), im.to_f64());
                    if (z - d).norm() > 1e-9 * z.norm().max(1.0) {
                        return Err(Error::BadInput(format!("declared p({xi}) = {d} but symbol gives {z}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCluster {
    /// Ratio at the largest `|ξ|` inside the cluster.
    pub k: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub max_radius: f64,
}

pub fn shells_up_to(ximax: u64) -> u32 {
    63 - ximax.max(2).leading_zeros()
}

/// Dyadic shell `2^k ≤ |ξ| < 2^{k+1}`: every lattice point for `N = 1`, a seeded sample otherwise.
pub fn shell_points(dim: usize, k: u32, samples: usize, seed: u64) -> Vec<Vec<i64>> {
    let lo = 1i64 << k;
    let hi = 1i64 << (k + 1);
    if dim == 1 {
        return (lo..hi).flat_map(|x| [vec![x], vec![-x]]).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 32) ^ dim as u64);
    let mut out = Vec::with_capacity(samples);
    // axis points first so that boundary directions are always present
    for d in 0..dim {
        for s in [1, -1] {
            let mut v = vec![0i64; dim];
            v[d] = s * lo;
            out.push(v);
        }
    }
    let mut guard = 0;
    while out.len() < samples && guard < samples * 20 {
        guard += 1;
        let dir: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 || n > 1.0 {
            continue;
        }
        let r = lo as f64 + rng.gen::<f64>() * (hi - lo) as f64;
        let v: Vec<i64> = dir.iter().map(|x| (x / n * r).round() as i64).collect();
        let nv = norm(&v);
        if nv >= lo as f64 && nv < hi as f64 {
            out.push(v);
        }
    }
    out
}

pub(crate) fn numeric_growth(ev: &[(u32, f64)]) -> GrowthKind {
    if ev.len() < 4 {
        return GrowthKind::Undetermined;
    }
    let top = &ev[ev.len() - 4..];
    let kappa = ev.iter().map(|e| e.1).fold(0.0, f64::max);
    let grows = top.windows(2).all(|w| w[1].1 >= 1.5 * w[0].1);
    let witnessed = top.iter().all(|e| e.1 >= e.0 as f64);
    if grows && witnessed {
        return GrowthKind::SuperLog { witnesses: top.iter().map(|e| e.0).collect() };
    }
    let bounded = top[1..].iter().all(|e| e.1 <= 1.1 * top[0].1);
    if bounded {
        return GrowthKind::AtMostLog { kappa, n0: 2 };
    }
    GrowthKind::Undetermined
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(t: &str) -> SymbolSpec {
        SymbolSpec::parse(t, 1, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn evaluation() {
        let p = sym("pow(absxi, 0.5) + i*pow(absxi, 1.5)");
        assert_eq!(p.eval(&[4]).unwrap(), Complex64::new(2.0, 8.0));
        let q = sym("xi1 + i*xi1*xi1");
        assert_eq!(q.eval(&[-3]).unwrap(), Complex64::new(-3.0, 9.0));
        assert_eq!(q.eval(&[7]).unwrap().re.to_bits(), q.eval(&[7]).unwrap().re.to_bits());
    }

    #[test]
    fn parse_errors_have_positions() {
        match SymbolSpec::parse("1 + \n  foo", 1, &BTreeMap::new()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(SymbolSpec::parse("xi2", 1, &BTreeMap::new()).is_err());
        assert!(SymbolSpec::parse("pow(absxi 2)", 1, &BTreeMap::new()).is_err());
    }

    #[test]
    fn growth_classes() {
        let g = |t: &str, part| sym(t).classify_growth(part, 4096, 64, 1);
        assert!(g("pow(absxi, 0.5)", Part::Re).is_super());
        let seven = g("7", Part::Re);
        match seven.kind {
            GrowthKind::AtMostLog { kappa, n0 } => {
                assert!((kappa - 7.0 / 2f64.ln()).abs() < 1e-12);
                assert_eq!(n0, 2);
            }
            k => panic!("{k:?}"),
        }
        assert!(g("1 + i*absxi*log1p(absxi)", Part::Im).is_super());
        assert!(g("1 + i*absxi*log1p(absxi)", Part::Re).is_log());
        assert!(g("pow(absxi + 1, 0.5)", Part::Re).is_super());
        assert!(g("pow(absxi, -0.5)", Part::Re).is_log());
        assert!(g("3*log1p(absxi)", Part::Re).is_log());
        assert!(g("xi1 - absxi", Part::Re).is_super());
        assert!(g("xi1 + i*xi1*xi1", Part::Im).is_super());
    }

    #[test]
    fn numeric_growth_scan() {
        let ev: Vec<(u32, f64)> = (1..=16).map(|k| (k, 2f64.powi(k as i32) / (k as f64 * 2f64.ln()))).collect();
        assert!(matches!(numeric_growth(&ev), GrowthKind::SuperLog { .. }));
        let ev: Vec<(u32, f64)> = (1..=16).map(|k| (k, 3.0 + 1.0 / k as f64)).collect();
        assert!(matches!(numeric_growth(&ev), GrowthKind::AtMostLog { .. }));
    }

    #[test]
    fn ratio_clusters() {
        let p = sym("pow(absxi, 0.5) + i*pow(absxi + 1, 0.5)");
        let c = p.ratio_accumulation(Part::Re, 65536, 4, 1e-3, 64, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].k - 1.0).abs() < 1e-3);
        let p = sym("i*absxi");
        let c = p.ratio_accumulation(Part::Re, 4096, 4, 1e-3, 64, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].k, 0.0);
        assert!(matches!(sym("1").ratio_accumulation(Part::Re, 4096, 4, 1e-3, 64, 1), Err(Error::NoWitnesses)));
    }

    #[test]
    fn little_o_cases() {
        assert!(sym("pow(absxi,0.5) + i*absxi").little_o(Part::Re, 65536, 0.05, 64, 1));
        assert!(!sym("absxi + i*absxi").little_o(Part::Re, 65536, 0.05, 64, 1));
        assert!(sym("absxi + i*absxi*log1p(absxi)").little_o(Part::Re, 65536, 0.05, 64, 1));
    }

    #[test]
    fn orders() {
        assert!((sym("xi1 + i*xi1*xi1").order_estimate(65536, 64, 1) - 2.0).abs() < 0.05);
        assert!(sym("5").order_estimate(65536, 64, 1).abs() < 0.05);
        assert!((sym("pow(absxi,1.5)*i").order_estimate(65536, 64, 1) - 1.5).abs() < 0.05);
    }

    #[test]
    fn higher_dimensional_shells() {
        let pts = shell_points(3, 5, 200, 7);
        assert!(pts.len() >= 100);
        assert!(pts.iter().all(|v| {
            let r = norm(v);
            (32.0..64.0).contains(&r)
        }));
        assert_eq!(pts, shell_points(3, 5, 200, 7));
    }
}
