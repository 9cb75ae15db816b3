//! The averaged operator `L₀ = D_t + (a₀+ib₀)P(D_x)`: resonances, the
//! Diophantine lower bound for `|τ + M₀(ξ)|`, and exact verdicts for
//! homogeneous symbols on the circle.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{RunConfig, LIMINF_MAX_EXPONENT};
use crate::diophantine::{irrationality_exponent, power_sequence, ExponentFlag, TaggedConstant};
use crate::error::{Error, Result};
use crate::exact::{ArithClass, Exact};
use crate::operator::{Form, OperatorSpec};
use crate::symbol::{linear_fit, shell_points, shells_up_to};
use crate::verdict::{rule, EvidenceKind, Status, Verdict};

pub fn m0(op: &OperatorSpec, xi: &[i64]) -> Result<Complex64> {
    op.m0(xi)
}

fn norm(xi: &[i64]) -> f64 {
    xi.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

/// Nonzero lattice points with `|ξ| ≤ ximax`, sorted by `|ξ|`: all of them for
/// `N = 1`, an exhaustive box plus shell samples beyond it for `N ≥ 2`.
pub fn lattice_points(dim: usize, ximax: u64, samples: usize, seed: u64) -> Vec<Vec<i64>> {
    let mut pts: Vec<Vec<i64>> = Vec::new();
    if dim == 1 {
        for x in 1..=ximax as i64 {
            pts.push(vec![x]);
            pts.push(vec![-x]);
        }
        return pts;
    }
    let budget: f64 = (1u64 << 21) as f64;
    let r = ((budget.powf(1.0 / dim as f64) - 1.0) / 2.0).floor().max(1.0) as i64;
    let r = r.min(ximax as i64);
    let mut cur = vec![-r; dim];
    loop {
        let n = norm(&cur);
        if n > 0.0 && n <= r as f64 {
            pts.push(cur.clone());
        }
        let mut d = 0;
        loop {
            if d == dim {
                break;
            }
            cur[d] += 1;
            if cur[d] > r {
                cur[d] = -r;
                d += 1;
            } else {
                break;
            }
        }
        if d == dim {
            break;
        }
    }
    let first = shells_up_to(r as u64) + 1;
    for k in first..=shells_up_to(ximax) {
        pts.extend(shell_points(dim, k, samples, seed).into_iter().filter(|p| {
            let n = norm(p);
            n > r as f64 && n <= ximax as f64
        }));
    }
    pts.sort_by(|a, b| norm(a).partial_cmp(&norm(b)).unwrap().then(a.cmp(b)));
    pts.dedup();
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub resonant: Vec<Vec<i64>>,
    pub ximax: u64,
    pub tol: f64,
    /// Resonant count per dyadic shell `2^k ≤ |ξ| < 2^{k+1}` (`k = 0` holds `|ξ| = 1`).
    pub shell_counts: Vec<(u32, usize)>,
    /// Resonances keep appearing in every one of the top three shells.
    pub infinite_trend: bool,
}

pub fn is_resonant(m0: Complex64, tol: f64) -> bool {
    (m0.re - m0.re.round()).abs() <= tol && m0.im.abs() <= tol
}

pub fn resonance_scan(op: &OperatorSpec, ximax: u64, tol: f64, cfg: &RunConfig) -> Result<ResonanceScan> {
    if !(tol > 0.0 && tol < 0.5) {
        return Err(Error::BadInput("resonance tolerance must lie in (0, 0.5)".into()));
    }
    let pts = lattice_points(op.dim, ximax, cfg.shell_samples, cfg.seed);
    let flags: Vec<bool> = pts.par_iter().map(|xi| op.m0(xi).map(|m| is_resonant(m, tol)).unwrap_or(false)).collect();
    let resonant: Vec<Vec<i64>> = pts.into_iter().zip(flags).filter(|p| p.1).map(|p| p.0).collect();
    let top = shells_up_to(ximax);
    let shell_counts: Vec<(u32, usize)> = (0..=top)
        .map(|k| {
            let (lo, hi) = ((1u64 << k) as f64, (1u64 << (k + 1)) as f64);
            (k, resonant.iter().filter(|x| (lo..hi).contains(&norm(x))).count())
        })
        .collect();
    let infinite_trend = top >= 3 && shell_counts[(top as usize - 2)..].iter().all(|c| c.1 > 0);
    Ok(ResonanceScan { resonant, ximax, tol, shell_counts, infinite_trend })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub xi: Vec<i64>,
    pub tau: i64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaScan {
    pub rows: Vec<DeltaRow>,
    pub c_hat: f64,
    pub m_hat: f64,
    pub residual: f64,
    pub ximax: u64,
}

impl DeltaScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("xi,tau,delta\n");
        for r in &self.rows {
            let xi = r.xi.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            s.push_str(&format!("{xi},{},{:e}\n", r.tau, r.delta));
        }
        s
    }
}

/// Nearest integer `τ* = −round(Re M₀)` and `δ = |τ* + M₀|`.
pub fn nearest(m0: Complex64) -> (i64, f64) {
    let tau = -(m0.re.round()) as i64;
    (tau, (Complex64::new(tau as f64, 0.0) + m0).norm())
}

pub fn delta_scan_fit(op: &OperatorSpec, ximax: u64, cfg: &RunConfig) -> Result<DeltaScan> {
    delta_scan_beyond(op, ximax, cfg, 0.0)
}

/// As [`delta_scan_fit`], restricted to `|ξ| > rmin`.
pub fn delta_scan_beyond(op: &OperatorSpec, ximax: u64, cfg: &RunConfig, rmin: f64) -> Result<DeltaScan> {
    let mut pts = lattice_points(op.dim, ximax, cfg.shell_samples, cfg.seed);
    pts.retain(|x| norm(x) > rmin);
    let rows: Vec<DeltaRow> = pts
        .par_iter()
        .map(|xi| {
            let m = op.m0(xi)?;
            let (tau, delta) = nearest(m);
            Ok(DeltaRow { xi: xi.clone(), tau, delta })
        })
        .collect::<Result<Vec<_>>>()?;
    let bad: Vec<i64> = rows
        .iter()
        .filter(|r| r.delta <= cfg.resonance_tol)
        .take(16)
        .flat_map(|r| r.xi.clone())
        .collect();
    if !bad.is_empty() {
        return Err(Error::ResonantModes(bad));
    }
    // only complete shells enter the fit
    let top = shells_up_to(ximax + 1) - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..=top {
        let (lo, hi) = ((1u64 << k) as f64, (1u64 << (k + 1)) as f64);
        let worst = rows
            .iter()
            .filter(|r| (lo..hi).contains(&norm(&r.xi)))
            .min_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap());
        if let Some(w) = worst {
            xs.push((w.tau.unsigned_abs() as f64 + norm(&w.xi)).ln());
            ys.push(-w.delta.ln());
        }
    }
    let (m_hat, icpt) = if xs.len() >= 2 { linear_fit(&xs, &ys) } else { (0.0, 0.0) };
    let residual = if xs.is_empty() {
        0.0
    } else {
        (xs.iter().zip(&ys).map(|(x, y)| (y - m_hat * x - icpt).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    };
    let c_hat = rows
        .iter()
        .map(|r| r.delta * (r.tau.unsigned_abs() as f64 + norm(&r.xi)).powf(m_hat))
        .fold(f64::INFINITY, f64::min);
    Ok(DeltaScan { rows, c_hat, m_hat, residual, ximax })
}

/// Smallest `M ≤ cap` for which the per-shell minimum of `|ξ|^M |Im M₀(ξ)|`
/// stays bounded away from zero over the top four shells.
pub fn liminf_exponent(op: &OperatorSpec, ximax: u64, cfg: &RunConfig) -> Option<(u32, f64)> {
    let pts = lattice_points(op.dim, ximax, cfg.shell_samples, cfg.seed);
    let vals: Vec<(f64, f64)> = pts.iter().filter_map(|xi| op.m0(xi).ok().map(|m| (norm(xi), m.im.abs()))).collect();
    let top = shells_up_to(ximax);
    if top < 4 {
        return None;
    }
    for mexp in 0..=LIMINF_MAX_EXPONENT as u32 {
        let per_shell: Vec<f64> = (1..=top)
            .map(|k| {
                let (lo, hi) = ((1u64 << k) as f64, (1u64 << (k + 1)) as f64);
                vals.iter()
                    .filter(|v| (lo..hi).contains(&v.0))
                    .map(|v| v.0.powi(mexp as i32) * v.1)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        if per_shell.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return None;
        }
        let tail = &per_shell[per_shell.len() - 4..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo >= 0.5 * tail[0] {
            let overall = per_shell.iter().cloned().fold(f64::INFINITY, f64::min);
            return Some((mexp, overall));
        }
    }
    None
}

/// Outcome of one boundary direction (`ξ > 0` or `ξ < 0`) of a homogeneous symbol on the circle.
#[derive(Debug, Clone, PartialEq)]
pub enum SideOutcome {
    Bounded,
    Resonant { certificate: Value },
    Liouville { detail: Value },
    Irrational { detail: Value },
    Unknown(String),
}

fn exact_side(
    a0: &Exact,
    b0: &Exact,
    boundary: &(Exact, Exact),
    tag: Option<&Exact>,
    ell: u32,
    q: u32,
    sign: i64,
    bits: u32,
    threshold: f64,
) -> SideOutcome {
    let (alpha, beta) = boundary;
    let prod = |x: &Exact, y: &Exact| x.mul(y);
    let im = match (prod(a0, beta), prod(b0, alpha)) {
        (Some(x), Some(y)) => x.add(&y),
        _ => return SideOutcome::Unknown("a₀β + b₀α not representable exactly".into()),
    };
    match im.is_zero() {
        Some(false) => return SideOutcome::Bounded,
        None => return SideOutcome::Unknown("cannot decide whether a₀β + b₀α vanishes".into()),
        Some(true) => {}
    }
    let c = match (prod(a0, alpha), prod(b0, beta)) {
        (Some(x), Some(y)) => x.sub(&y),
        _ => return SideOutcome::Unknown("a₀α − b₀β not representable exactly".into()),
    };
    let cq = match tag {
        Some(t) => t.clone(),
        None => {
            if c.is_zero() == Some(true) {
                let certificate = json!({"kind": "vanishing_multiplier", "side": sign, "tau": 0, "xi": "every ξ on this side"});
                return SideOutcome::Resonant { certificate };
            }
            c.pow(q)
        }
    };
    match cq.class() {
        ArithClass::Rational => {
            let r = cq.as_rational().expect("rational class");
            let r = r.abs();
            if r.is_zero() {
                let certificate = json!({"kind": "vanishing_multiplier", "side": sign});
                return SideOutcome::Resonant { certificate };
            }
            let (pt, qt) = (r.numer().clone(), r.denom().clone());
            let seq = match power_sequence(&pt, &qt, ell, q) {
                Ok(s) => s,
                Err(e) => return SideOutcome::Unknown(format!("power sequence unavailable: {e}")),
            };
            let csign = if c.to_f64() >= 0.0 { 1 } else { -1 };
            let pairs: Vec<Value> = (1..=10u64)
                .map(|n| {
                    let (tau, xi) = seq.pair(n);
                    debug_assert!(seq.holds(&tau, &xi));
                    json!({"n": n, "tau": (-BigInt::from(csign) * &tau).to_string(), "xi": (BigInt::from(sign) * &xi).to_string()})
                })
                .collect();
            let certificate = json!({
                "kind": "power_sequence",
                "side": sign,
                "p_tilde": pt.to_string(),
                "q_tilde": qt.to_string(),
                "ell": ell,
                "q": q,
                "identity": "q̃·τ_n^q = p̃·ξ_n^ℓ",
                "pairs": pairs,
            });
            SideOutcome::Resonant { certificate }
        }
        ArithClass::QuadraticIrrational => SideOutcome::Irrational { detail: json!({"power": cq.to_json(), "class": "quadratic irrational"}) },
        ArithClass::LiouvilleConstructed => {
            let tc = TaggedConstant::new(cq.clone(), bits);
            let est = irrationality_exponent(&tc, &BigInt::from(10u64).pow(40), threshold);
            let flag = est.as_ref().map(|e| e.flag).unwrap_or(ExponentFlag::Inconclusive);
            SideOutcome::Liouville {
                detail: json!({"power": cq.to_json(), "class": "Liouville (constructed)", "flag": format!("{flag:?}"),
                    "mu_hat": est.as_ref().ok().and_then(|e| e.mu_hat)}),
            }
        }
        ArithClass::Unknown => SideOutcome::Unknown(format!("arithmetic class of (a₀α − b₀β)^q = {} unknown", cq.to_f64())),
    }
}

/// Exact verdict for `N = 1`, single term, declared homogeneity with rational degree and boundary values.
pub fn homogeneous_exact(op: &OperatorSpec, cfg: &RunConfig) -> Option<Verdict> {
    if op.form != Form::Single || op.dim != 1 {
        return None;
    }
    let h = op.symbol().homogeneity.as_ref()?;
    let (pp, pm) = (h.p_plus.as_ref()?, h.p_minus.as_ref()?);
    let m = h.degree.as_rational()?;
    let (a0, b0) = (op.terms[0].a0(), op.terms[0].b0());
    let mult = |bv: &(Exact, Exact)| -> Option<(Exact, Exact)> {
        let re = a0.mul(&bv.0)?.sub(&b0.mul(&bv.1)?);
        let im = a0.mul(&bv.1)?.add(&b0.mul(&bv.0)?);
        Some((re, im))
    };
    if !m.is_positive() {
        let sides = [mult(pp)?, mult(pm)?];
        let detail = json!({"degree": h.degree.to_json(), "c_plus": [sides[0].0.to_json(), sides[0].1.to_json()], "c_minus": [sides[1].0.to_json(), sides[1].1.to_json()]});
        let mut all_good = true;
        for (re, im) in &sides {
            let good = if m.is_negative() {
                match (re.is_zero(), im.is_zero()) {
                    (Some(true), Some(true)) => false,
                    (Some(false), _) | (_, Some(false)) => true,
                    _ => return None,
                }
            } else {
                match im.is_zero() {
                    Some(false) => true,
                    None => return None,
                    Some(true) => match re.as_rational() {
                        Some(r) => !r.is_integer(),
                        None => match re.class() {
                            ArithClass::Unknown => return None,
                            _ => true,
                        },
                    },
                }
            };
            all_good &= good;
        }
        let status = if all_good { Status::Gh } else { Status::NotGh };
        let id = if m.is_negative() { "averaged-homogeneous-negative" } else { "averaged-homogeneous-zero" };
        let anchor = if m.is_negative() { "negative degree: GH iff the boundary multipliers are nonzero" } else { "degree zero: GH iff the boundary multipliers are not integers" };
        return Some(Verdict::new(status).with_rule(rule(id, anchor, status, EvidenceKind::Exact, detail, None)));
    }
    let ell = m.numer().to_u32()?;
    let q = m.denom().to_u32()?;
    let outcomes = [
        exact_side(&a0, &b0, pp, h.power_tag_plus.as_ref(), ell, q, 1, cfg.precision_bits, cfg.liouville_threshold),
        exact_side(&a0, &b0, pm, h.power_tag_minus.as_ref(), ell, q, -1, cfg.precision_bits, cfg.liouville_threshold),
    ];
    let anchor = "positive rational degree ℓ/q: GH iff (a₀α − b₀β)^q is irrational non-Liouville whenever a₀β + b₀α = 0";
    let mut v = Verdict::new(Status::Gh);
    let mut details = Vec::new();
    let mut undecided = Vec::new();
    for (o, side) in outcomes.iter().zip(["+1", "-1"]) {
        match o {
            SideOutcome::Bounded => details.push(json!({"side": side, "outcome": "imaginary part nonzero"})),
            SideOutcome::Irrational { detail } => details.push(json!({"side": side, "outcome": "irrational non-Liouville", "detail": detail})),
            SideOutcome::Resonant { certificate } => {
                v.status = Status::NotGh;
                v.certificates.push(certificate.clone());
                details.push(json!({"side": side, "outcome": "exact resonances"}));
            }
            SideOutcome::Liouville { detail } => {
                v.status = Status::NotGh;
                v.suspect = true;
                details.push(json!({"side": side, "outcome": "Liouville", "detail": detail}));
            }
            SideOutcome::Unknown(msg) => {
                undecided.push(msg.clone());
                details.push(json!({"side": side, "outcome": "unknown", "reason": msg}));
            }
        }
    }
    if !v.certificates.is_empty() {
        v.suspect = false;
    }
    if v.status == Status::Gh && !undecided.is_empty() {
        v.status = Status::Undecided;
        v.diagnostics = undecided;
    }
    let status = v.status;
    v.rules.push(rule("averaged-homogeneous-exact", anchor, status, EvidenceKind::Exact, json!({"ell": ell, "q": q, "sides": details}), None));
    Some(v)
}

/// Verdict on `L₀`: liminf shortcut, exact homogeneous branch, then the finite-range Diophantine fit.
pub fn gh_verdict_l0(op: &OperatorSpec, cfg: &RunConfig) -> Verdict {
    let ximax = cfg.ximax_scan.min(if op.dim == 1 { 1 << 16 } else { 4096 });
    if let Some((mexp, floor)) = liminf_exponent(op, ximax, cfg) {
        let anchor = "liminf |ξ|^M |Im M₀(ξ)| > 0";
        return Verdict::new(Status::Gh).with_rule(rule(
            "averaged-liminf",
            anchor,
            Status::Gh,
            EvidenceKind::Numeric,
            json!({"M": mexp, "shell_min": floor}),
            Some(json!({"ximax": ximax})),
        ));
    }
    if let Some(v) = homogeneous_exact(op, cfg) {
        if v.status != Status::Undecided {
            return v;
        }
    }
    let anchor = "|τ + M₀(ξ)| ≥ C(|τ| + |ξ|)^{-M}";
    let scope = json!({"ximax": ximax});
    let rs = match resonance_scan(op, ximax, cfg.resonance_tol, cfg) {
        Ok(r) => r,
        Err(e) => return Verdict::undecided(vec![e.to_string()]),
    };
    if rs.infinite_trend {
        let cert = json!({"kind": "resonances", "xi": rs.resonant.iter().rev().take(16).collect::<Vec<_>>(), "shell_counts": rs.shell_counts});
        let mut v = Verdict::new(Status::NotGh).with_rule(rule(
            "averaged-resonant",
            "infinitely many ξ with M₀(ξ) ∈ Z",
            Status::NotGh,
            EvidenceKind::Numeric,
            json!({"resonant_count": rs.resonant.len()}),
            Some(scope),
        ));
        v.certificates.push(cert);
        return v;
    }
    // finitely many resonances at small radius do not affect the bound beyond them
    let rmax = rs.resonant.iter().map(|x| norm(x)).fold(0.0, f64::max);
    let d = match delta_scan_beyond(op, ximax, cfg, rmax) {
        Ok(d) => d,
        Err(e) => return Verdict::undecided(vec![e.to_string()]),
    };
    let detail = json!({"M_hat": d.m_hat, "C_hat": d.c_hat, "fit_residual": d.residual, "excluded_radius": rmax});
    let scope = json!({"ximax": ximax, "fit_residual": d.residual});
    if d.m_hat <= LIMINF_MAX_EXPONENT && d.c_hat > 0.0 {
        Verdict::new(Status::Gh).with_rule(rule("averaged-diophantine-fit", anchor, Status::Gh, EvidenceKind::Numeric, detail, Some(scope)))
    } else {
        let mut v = Verdict::undecided(vec![format!("fitted exponent {:.2} exceeds the cap {}", d.m_hat, LIMINF_MAX_EXPONENT)]);
        v.rules.push(rule("averaged-diophantine-fit", anchor, Status::Undecided, EvidenceKind::Numeric, detail, Some(scope)));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(text: &str) -> OperatorSpec {
        OperatorSpec::from_json_str(text).unwrap()
    }

    fn cfg() -> RunConfig {
        RunConfig::default()
    }

    #[test]
    fn averaged_multiplier() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[1,1]}},"b":0,"symbol":"absxi*absxi"}"#);
        assert_eq!(m0(&o, &[3]).unwrap(), Complex64::new(9.0, 0.0));
        let o = op(r#"{"a":{"trigpoly":{"cos":[1,1]}},"b":{"trigpoly":{"cos":[-1,0,1]}},"symbol":"pow(absxi,0) + i*pow(absxi,3)"}"#);
        for x in [3i64, 5, 10] {
            let m = m0(&o, &[x]).unwrap();
            assert!(m.im.abs() >= 1.0);
        }
    }

    #[test]
    fn resonances_rational_data() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[0.5,1]}},"b":0,"symbol":"xi1*xi1"}"#);
        let s = resonance_scan(&o, 64, 1e-9, &cfg()).unwrap();
        assert!(s.resonant.iter().all(|x| x[0] % 2 == 0));
        assert_eq!(s.resonant.len(), 64);
        assert!(s.infinite_trend);
        let o = op(r#"{"a":1,"b":1,"symbol":"i*absxi"}"#);
        assert!(resonance_scan(&o, 256, 1e-9, &cfg()).unwrap().resonant.is_empty());
        let o = op(r#"{"a":{"quadirr":{"d":2,"a":[0,1],"b":[1,1]}},"b":0,"symbol":"xi1"}"#);
        assert!(resonance_scan(&o, 4096, 1e-9, &cfg()).unwrap().resonant.is_empty());
    }

    #[test]
    fn delta_rounding_matches_brute_force() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[0.3]}},"b":{"trigpoly":{"cos":[0.01]}},"symbol":"pow(absxi,1.5)"}"#);
        for x in 1..200i64 {
            let m = o.m0(&[x]).unwrap();
            let (_, d) = nearest(m);
            let r = (2.0 * m.norm() + 2.0) as i64;
            let brute = (-r..=r).map(|t| (Complex64::new(t as f64, 0.0) + m).norm()).fold(f64::INFINITY, f64::min);
            assert_eq!(d, brute);
            assert!(d >= m.im.abs());
        }
    }

    #[test]
    fn delta_fits() {
        let o = op(r#"{"a":{"quadirr":{"d":2,"a":[0,1],"b":[1,1]}},"b":0,"symbol":"xi1"}"#);
        let d = delta_scan_fit(&o, 65536, &cfg()).unwrap();
        assert!((0.8..=1.2).contains(&d.m_hat), "{}", d.m_hat);
        let o = op(r#"{"a":1,"b":0,"symbol":"i*absxi"}"#);
        let d = delta_scan_fit(&o, 4096, &cfg()).unwrap();
        assert!(d.m_hat <= 0.0);
        assert!(d.rows.iter().all(|r| r.delta >= (r.xi[0].abs() as f64) - 1e-9));
        let o = op(r#"{"a":{"trigpoly":{"cos":[0.5]}},"b":0,"symbol":"xi1*xi1"}"#);
        assert!(matches!(delta_scan_fit(&o, 64, &cfg()), Err(Error::ResonantModes(_))));
    }

    #[test]
    fn exact_homogeneous_branch() {
        let sqrt2 = r#"{"quadirr":{"d":2,"a":[0,1],"b":[1,1]}}"#;
        let quarter = format!(
            r#"{{"a":{sqrt2},"b":0,"symbol":"pow(absxi,0.5)","homogeneous":{{"degree":{{"rational":[1,2]}},"p_plus":[1,0],"p_minus":[1,0]}}}}"#
        );
        let v = gh_verdict_l0(&op(&quarter), &cfg());
        assert_eq!(v.status, Status::NotGh);
        let cert = &v.certificates[0];
        assert_eq!(cert["kind"], "power_sequence");
        for pair in cert["pairs"].as_array().unwrap() {
            let tau: BigInt = pair["tau"].as_str().unwrap().parse().unwrap();
            let xi: BigInt = pair["xi"].as_str().unwrap().parse().unwrap();
            // τ + √2·√ξ = 0  ⇔  τ < 0 and τ² = 2ξ
            assert!(tau < BigInt::zero());
            assert_eq!(&tau * &tau, BigInt::from(2) * &xi);
        }
        let half = format!(
            r#"{{"a":{sqrt2},"b":0,"symbol":"absxi","homogeneous":{{"degree":1,"p_plus":[1,0],"p_minus":[1,0]}}}}"#
        );
        assert_eq!(gh_verdict_l0(&op(&half), &cfg()).status, Status::Gh);
        let neg = r#"{"a":{"trigpoly":{"cos":[1],"sin":[1]}},"b":0,"symbol":"pow(absxi,-0.5)","homogeneous":{"degree":{"rational":[-1,2]},"p_plus":[1,0],"p_minus":[1,0]}}"#;
        assert_eq!(gh_verdict_l0(&op(neg), &cfg()).status, Status::Gh);
    }

    #[test]
    fn liouville_power_tag() {
        let text = r#"{"a":0.1368,"b":0,"symbol":"pow(absxi,0.5)",
          "homogeneous":{"degree":{"rational":[1,2]},"p_plus":[1,0],"p_minus":[1,0],
             "power_tag_plus":{"liouville":{"base":10,"scale":[3,2],"power":2}},
             "power_tag_minus":{"liouville":{"base":10,"scale":[3,2],"power":2}}}}"#;
        let v = gh_verdict_l0(&op(text), &cfg());
        assert_eq!(v.status, Status::NotGh);
        assert!(v.suspect);
    }

    #[test]
    fn liminf_shortcut() {
        let o = op(r#"{"a":1,"b":1,"symbol":"i*absxi"}"#);
        let v = gh_verdict_l0(&o, &cfg());
        assert_eq!(v.status, Status::Gh);
        assert_eq!(v.rules[0].id, "averaged-liminf");
    }
}
