//! Operator descriptions `L = D_t + (a+ib)(t)P(D_x)` and sums of one-variable
//! homogeneous terms, with JSON ingestion.

use num_complex::Complex64;
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::periodic::{bump, glued_parabola, smooth_step, PeriodicFn};
use crate::symbol::{Homogeneity, SymbolSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub a: PeriodicFn,
    pub b: PeriodicFn,
    pub p: SymbolSpec,
    /// Lattice coordinate the symbol acts on (sum form); `None` acts on all of `ξ`.
    pub var: Option<usize>,
}

impl Term {
    pub fn symbol(&self, xi: &[i64]) -> Result<Complex64> {
        match self.var {
            Some(j) => self.p.eval(&[xi[j]]),
            None => self.p.eval(xi),
        }
    }

    pub fn a0(&self) -> Exact {
        exact_mean(&self.a)
    }

    pub fn b0(&self) -> Exact {
        exact_mean(&self.b)
    }

    pub fn degree(&self) -> Option<f64> {
        self.p.homogeneity.as_ref().map(|h| h.degree.to_f64())
    }

    /// `Im M_j(·, ξ_j) = a β_j + b α_j` for a symbol value `p_j = α_j + iβ_j`.
    pub fn im_part(&self, pv: Complex64) -> PeriodicFn {
        PeriodicFn::lin_comb(pv.im, &self.a, pv.re, &self.b)
    }

    /// `Re M_j(·, ξ_j) = a α_j − b β_j`.
    pub fn re_part(&self, pv: Complex64) -> PeriodicFn {
        PeriodicFn::lin_comb(pv.re, &self.a, -pv.im, &self.b)
    }
}

pub fn exact_mean(f: &PeriodicFn) -> Exact {
    f.exact_mean().cloned().unwrap_or_else(|| Exact::from_f64(f.mean()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Single,
    Sum,
}

/// User-declared decomposition `Im M(t, ξ) = ã(t)γ(ξ) + b̃(t)η(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub a_tilde: PeriodicFn,
    pub b_tilde: PeriodicFn,
    pub gamma: SymbolSpec,
    pub eta: SymbolSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub name: String,
    pub dim: usize,
    pub form: Form,
    pub terms: Vec<Term>,
    pub split: Option<Split>,
    /// Canonical JSON text of the input, used for content hashing.
    pub canonical: String,
}

impl OperatorSpec {
    pub fn single(a: PeriodicFn, b: PeriodicFn, p: SymbolSpec) -> Self {
        let dim = p.dim;
        OperatorSpec {
            name: String::new(),
            dim,
            form: Form::Single,
            terms: vec![Term { a, b, p, var: None }],
            split: None,
            canonical: String::new(),
        }
    }

    pub fn symbol(&self) -> &SymbolSpec {
        &self.terms[0].p
    }

    pub fn a(&self) -> &PeriodicFn {
        &self.terms[0].a
    }

    pub fn b(&self) -> &PeriodicFn {
        &self.terms[0].b
    }

    pub fn term_symbols(&self, xi: &[i64]) -> Result<Vec<Complex64>> {
        self.terms.iter().map(|t| t.symbol(xi)).collect()
    }

    /// `M₀(ξ) = Σ (a_{j0} + i b_{j0}) p_j(ξ_j)`.
    pub fn m0(&self, xi: &[i64]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            acc += Complex64::new(t.a.mean(), t.b.mean()) * t.symbol(xi)?;
        }
        Ok(acc)
    }

    pub fn m_at(&self, t: f64, xi: &[i64]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for term in &self.terms {
            acc += Complex64::new(term.a.eval(t), term.b.eval(t)) * term.symbol(xi)?;
        }
        Ok(acc)
    }

    pub fn im_m(&self, xi: &[i64]) -> Result<PeriodicFn> {
        let mut acc = PeriodicFn::zero();
        for t in &self.terms {
            acc = PeriodicFn::lin_comb(1.0, &acc, 1.0, &t.im_part(t.symbol(xi)?));
        }
        Ok(acc)
    }

    pub fn re_m(&self, xi: &[i64]) -> Result<PeriodicFn> {
        let mut acc = PeriodicFn::zero();
        for t in &self.terms {
            acc = PeriodicFn::lin_comb(1.0, &acc, 1.0, &t.re_part(t.symbol(xi)?));
        }
        Ok(acc)
    }

    pub fn has_constant_coefficients(&self) -> bool {
        self.terms.iter().all(|t| t.a.is_constant() && t.b.is_constant())
    }

    /// `t ↦ L` with all coefficients replaced by `t ↦ c(t + s)`.
    pub fn translate(&self, s: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.a = t.a.translate(s);
            t.b = t.b.translate(s);
        }
        if let Some(sp) = &mut out.split {
            sp.a_tilde = sp.a_tilde.translate(s);
            sp.b_tilde = sp.b_tilde.translate(s);
        }
        out
    }

    /// `−L` after `t ↦ −t`: every coefficient `c` becomes `t ↦ −c(−t)`.
    pub fn reflect(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.a = t.a.reflect_negate();
            t.b = t.b.reflect_negate();
        }
        if let Some(sp) = &mut out.split {
            sp.a_tilde = sp.a_tilde.reflect_negate();
            sp.b_tilde = sp.b_tilde.reflect_negate();
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| bad("operator must be a JSON object"))?;
        let consts = parse_constants(obj.get("constants"))?;
        let name = obj.get("name").and_then(Value::as_str).unwrap_or("").to_string();
        let canonical = serde_json::to_string(v).map_err(|e| bad(e.to_string()))?;
        if let Some(sum) = obj.get("sum") {
            let arr = sum.as_array().ok_or_else(|| bad("'sum' must be an array"))?;
            if arr.is_empty() {
                return Err(bad("'sum' must have at least one term"));
            }
            if let Some(d) = obj.get("dim").and_then(Value::as_u64) {
                if d as usize != arr.len() {
                    return Err(bad(format!("sum form acts on one variable per term: dim {d} vs {} terms", arr.len())));
                }
            }
            let mut terms = Vec::new();
            for (j, tv) in arr.iter().enumerate() {
                let to = tv.as_object().ok_or_else(|| bad("sum term must be an object"))?;
                let a = coefficient(to.get("a"), "a")?;
                let b = coefficient(to.get("b"), "b")?;
                let mut p = symbol(to, 1, &consts)?;
                if p.homogeneity.is_none() {
                    return Err(bad(format!("sum term {} must declare 'homogeneous'", j + 1)));
                }
                p.check_homogeneity(64, 0)?;
                p.order_hint = p.homogeneity.as_ref().map(|h| h.degree.to_f64());
                terms.push(Term { a, b, p, var: Some(j) });
            }
            return Ok(OperatorSpec { name, dim: terms.len(), form: Form::Sum, terms, split: None, canonical });
        }
        let dim = obj.get("dim").and_then(Value::as_u64).unwrap_or(1) as usize;
        if dim == 0 {
            return Err(bad("dim must be >= 1"));
        }
        let a = coefficient(obj.get("a"), "a")?;
        let b = coefficient(obj.get("b"), "b")?;
        let mut p = symbol(obj, dim, &consts)?;
        p.check_homogeneity(64, 0)?;
        if let Some(h) = &p.homogeneity {
            p.order_hint = Some(h.degree.to_f64());
        }
        let mut op = OperatorSpec::single(a, b, p);
        op.name = name;
        op.canonical = canonical;
        if let Some(sv) = obj.get("split") {
            let so = sv.as_object().ok_or_else(|| bad("'split' must be an object"))?;
            let text = |k: &str| so.get(k).and_then(Value::as_str).ok_or_else(|| bad(format!("split.{k} must be an expression string")));
            let split = Split {
                a_tilde: coefficient(so.get("a_tilde"), "a_tilde")?,
                b_tilde: coefficient(so.get("b_tilde"), "b_tilde")?,
                gamma: SymbolSpec::parse(text("gamma")?, dim, &consts)?,
                eta: SymbolSpec::parse(text("eta")?, dim, &consts)?,
            };
            op.check_split(&split)?;
            op.split = Some(split);
        }
        Ok(op)
    }

    /// The declared split must reproduce `Im M` on a 16×16 grid of `(t, ξ)`.
    fn check_split(&self, s: &Split) -> Result<()> {
        let pts = crate::symbol::shell_points(self.dim, 0, 4, 0)
            .into_iter()
            .chain(crate::symbol::shell_points(self.dim, 3, 8, 0))
            .chain(crate::symbol::shell_points(self.dim, 6, 8, 0))
            .take(16)
            .collect::<Vec<_>>();
        for xi in &pts {
            let g = s.gamma.eval(xi)?.re;
            let e = s.eta.eval(xi)?.re;
            for k in 0..16 {
                let t = TAU * k as f64 / 16.0;
                let want = self.m_at(t, xi)?.im;
                let got = s.a_tilde.eval(t) * g + s.b_tilde.eval(t) * e;
                if (want - got).abs() > 1e-8 * want.abs().max(1.0) {
                    return Err(bad(format!("declared split does not reproduce Im M at t={t:.3}, ξ={xi:?}")));
                }
            }
        }
        Ok(())
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadInput(msg.into())
}

fn parse_constants(v: Option<&Value>) -> Result<BTreeMap<String, Exact>> {
    let mut out = BTreeMap::new();
    if let Some(v) = v {
        let o = v.as_object().ok_or_else(|| bad("'constants' must be an object"))?;
        for (k, c) in o {
            out.insert(k.clone(), Exact::from_json(c)?);
        }
    }
    Ok(out)
}

fn symbol(obj: &Map<String, Value>, dim: usize, consts: &BTreeMap<String, Exact>) -> Result<SymbolSpec> {
    let text = obj.get("symbol").and_then(Value::as_str).ok_or_else(|| bad("missing 'symbol' expression"))?;
    let mut p = SymbolSpec::parse(text, dim, consts)?;
    if let Some(h) = obj.get("homogeneous") {
        p.homogeneity = Some(homogeneity(h)?);
    }
    Ok(p)
}

fn homogeneity(v: &Value) -> Result<Homogeneity> {
    let o = v.as_object().ok_or_else(|| bad("'homogeneous' must be an object"))?;
    let degree = Exact::from_json(o.get("degree").ok_or_else(|| bad("homogeneous.degree missing"))?)?;
    let pair = |k: &str| -> Result<Option<(Exact, Exact)>> {
        match o.get(k) {
            None => Ok(None),
            Some(Value::Array(a)) if a.len() == 2 => Ok(Some((Exact::from_json(&a[0])?, Exact::from_json(&a[1])?))),
            Some(_) => Err(bad(format!("homogeneous.{k} must be [re, im]"))),
        }
    };
    let tag = |k: &str| o.get(k).map(Exact::from_json).transpose();
    Ok(Homogeneity {
        degree,
        p_plus: pair("p_plus")?,
        p_minus: pair("p_minus")?,
        power_tag_plus: tag("power_tag_plus")?,
        power_tag_minus: tag("power_tag_minus")?,
    })
}

/// Coefficient JSON: a tagged constant, `{"constant": c}`, `{"trigpoly": {...}}`,
/// `{"sampled": [...]}` or `{"builtin": {...}}`, with optional `"mean"`, `"scale"`, `"shift"`.
pub fn coefficient(v: Option<&Value>, key: &str) -> Result<PeriodicFn> {
    let v = v.ok_or_else(|| bad(format!("missing coefficient '{key}'")))?;
    let o = match v {
        Value::Object(o) if !o.contains_key("rational") && !o.contains_key("quadirr") && !o.contains_key("liouville") => o,
        _ => {
            let c = Exact::from_json(v)?;
            return Ok(PeriodicFn::exact_constant(c));
        }
    };
    let mut f = if let Some(c) = o.get("constant") {
        PeriodicFn::exact_constant(Exact::from_json(c)?)
    } else if let Some(tp) = o.get("trigpoly") {
        let nums = |k: &str| -> Result<Vec<f64>> {
            match tp.get(k) {
                None => Ok(vec![]),
                Some(Value::Array(a)) => a.iter().map(|x| x.as_f64().ok_or_else(|| bad(format!("{key}.trigpoly.{k} must hold numbers")))).collect(),
                Some(_) => Err(bad(format!("{key}.trigpoly.{k} must be an array"))),
            }
        };
        let mut cos = nums("cos")?;
        let sin = nums("sin")?;
        if cos.is_empty() {
            cos.push(0.0);
        }
        let mean = Exact::from_f64(cos[0]);
        PeriodicFn::trig(cos, sin).with_exact_mean(Some(mean))
    } else if let Some(s) = o.get("sampled") {
        let vals = s
            .as_array()
            .ok_or_else(|| bad(format!("{key}.sampled must be an array")))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| bad(format!("{key}.sampled must hold numbers"))))
            .collect::<Result<Vec<_>>>()?;
        PeriodicFn::sampled(vals)?
    } else if let Some(b) = o.get("builtin") {
        builtin(b)?
    } else {
        return Err(bad(format!("coefficient '{key}' has no recognised representation")));
    };
    let scale = o.get("scale").map(|x| x.as_f64().ok_or_else(|| bad("scale must be a number"))).transpose()?;
    let shift = o.get("shift").map(|x| x.as_f64().ok_or_else(|| bad("shift must be a number"))).transpose()?;
    if let Some(s) = scale {
        f = f.scaled(s);
    }
    if let Some(c) = shift {
        let em = f.exact_mean().cloned();
        f = PeriodicFn::lin_comb(1.0, &f, c, &PeriodicFn::constant(1.0));
        f = f.with_exact_mean(em.map(|e| e.add(&Exact::from_f64(c))));
    }
    if let Some(m) = o.get("mean") {
        let e = Exact::from_json(m)?;
        if (e.to_f64() - f.mean()).abs() > 1e-9 * f.mean().abs().max(1.0) {
            return Err(bad(format!("declared mean {} differs from computed mean {}", e.to_f64(), f.mean())));
        }
        f = f.with_exact_mean(Some(e));
    }
    Ok(f)
}

/// Plateau bump: 1 on `|t − c| ≤ inner`, 0 on `|t − c| ≥ outer`.
pub fn plateau_bump(t: f64, c: f64, inner: f64, outer: f64) -> f64 {
    let x = (t - c + PI).rem_euclid(TAU) - PI;
    1.0 - smooth_step((x.abs() - inner) / (outer - inner))
}

fn builtin(v: &Value) -> Result<PeriodicFn> {
    let o = v.as_object().ok_or_else(|| bad("builtin must be an object"))?;
    let name = o.get("name").and_then(Value::as_str).ok_or_else(|| bad("builtin.name missing"))?;
    let n = o.get("n").and_then(Value::as_u64).unwrap_or(4096) as usize;
    let num = |k: &str, d: f64| o.get(k).and_then(Value::as_f64).unwrap_or(d);
    let center = num("center", PI);
    match name {
        "glued_parabola" => Ok(glued_parabola(n)),
        "plateau_bump" => {
            let (inner, outer) = (num("inner", 0.5), num("outer", 1.0));
            if !(0.0 < inner && inner < outer && outer < PI) {
                return Err(bad("plateau_bump needs 0 < inner < outer < π"));
            }
            PeriodicFn::from_fn(n, |t| plateau_bump(t, center, inner, outer))
        }
        "bump" => {
            let w = num("width", 1.0);
            PeriodicFn::from_fn(n, |t| bump(((t - center + PI).rem_euclid(TAU) - PI) / w))
        }
        "odd_bump" => {
            let w = num("width", 0.5);
            PeriodicFn::from_fn(n, |t| {
                let x = (t - center + PI).rem_euclid(TAU) - PI;
                x / w * bump(x / w)
            })
        }
        _ => Err(bad(format!("unknown builtin '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_form() {
        let op = OperatorSpec::from_json_str(
            r#"{"dim":1,"a":{"trigpoly":{"cos":[1,1]}},"b":0,"symbol":"absxi*absxi"}"#,
        )
        .unwrap();
        assert_eq!(op.m0(&[3]).unwrap(), Complex64::new(9.0, 0.0));
        let op = OperatorSpec::from_json_str(r#"{"a":0,"b":{"trigpoly":{"cos":[0],"sin":[1]}},"symbol":"absxi"}"#).unwrap();
        assert_eq!(op.m0(&[5]).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn malformed_json_positions() {
        match OperatorSpec::from_json_str("{\n  \"a\": 1,\n  \"b\" 2}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn homogeneity_declarations() {
        let ok = r#"{"a":{"quadirr":{"d":2,"a":[0,1],"b":[1,1]}},"b":0,"symbol":"pow(absxi,0.5)",
            "homogeneous":{"degree":{"rational":[1,2]},"p_plus":[1,0],"p_minus":[1,0]}}"#;
        let op = OperatorSpec::from_json_str(ok).unwrap();
        assert_eq!(op.terms[0].a0().class(), crate::exact::ArithClass::QuadraticIrrational);
        let wrong = ok.replace("[1,2]", "[1,1]");
        assert!(OperatorSpec::from_json_str(&wrong).is_err());
    }

    #[test]
    fn sum_form() {
        let op = OperatorSpec::from_json_str(
            r#"{"sum":[
              {"a":0,"b":{"trigpoly":{"cos":[0.5,0,0.5]}},"symbol":"xi1","homogeneous":{"degree":1,"p_plus":[1,0],"p_minus":[-1,0]}},
              {"a":0,"b":{"trigpoly":{"cos":[0.7071067811865476,0,-0.7071067811865476]}},"symbol":"xi1","homogeneous":{"degree":1,"p_plus":[1,0],"p_minus":[-1,0]}}]}"#,
        )
        .unwrap();
        assert_eq!(op.dim, 2);
        let m0 = op.m0(&[2, -3]).unwrap();
        assert!((m0.im - (1.0 - 3.0 * 0.7071067811865476)).abs() < 1e-12);
    }

    #[test]
    fn split_is_validated() {
        let base = r#"{"a":{"trigpoly":{"cos":[0,1]}},"b":{"trigpoly":{"cos":[1]}},"symbol":"absxi + i*absxi*absxi",
            "split":{"a_tilde":{"trigpoly":{"cos":[0,1]}},"b_tilde":1,"gamma":"absxi*absxi","eta":"absxi"}}"#;
        assert!(OperatorSpec::from_json_str(base).is_ok());
        let broken = base.replace("\"eta\":\"absxi\"", "\"eta\":\"2*absxi\"");
        assert!(OperatorSpec::from_json_str(&broken).is_err());
    }

    #[test]
    fn builtins() {
        let f = coefficient(Some(&serde_json::json!({"builtin":{"name":"plateau_bump","n":1024},"scale":-2,"shift":1})), "a").unwrap();
        assert!((f.eval(PI) + 1.0).abs() < 1e-12);
        assert!((f.eval(0.0) - 1.0).abs() < 1e-12);
        assert!(f.sign_report(1e-9).changes_sign());
        let g = coefficient(Some(&serde_json::json!({"builtin":{"name":"odd_bump"}})), "b").unwrap();
        assert!(g.mean().abs() < 1e-12);
    }
}
