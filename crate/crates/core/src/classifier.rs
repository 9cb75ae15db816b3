//! Rule bank deciding global hypoellipticity, with a rule trace per verdict.
//!
//! Every rule inspects the operator and may produce a finding. Findings are ranked by
//! evidence quality (exact NOT_GH, exact GH, structural, numeric) and the best one sets
//! the status; the others stay in the trace.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::const_coeff::{gh_verdict_l0, resonance_scan};
use crate::operator::{Form, OperatorSpec};
use crate::periodic::{PeriodicFn, SignKind, SignReport};
use crate::symbol::{numeric_growth, shell_points, shells_up_to, GrowthClass, GrowthKind, Part, SymbolSpec};
use crate::verdict::{rule, EvidenceKind, RuleEntry, Status, Verdict};

/// A ratio cluster must hold this many lattice points to count as an accumulation point.
const CLUSTER_MIN_COUNT: usize = 16;
/// Top shells searched for ratio accumulation points.
const RATIO_SHELLS: u32 = 4;
/// Lattice points per shell in the sign and segment scans when `N ≥ 2`.
const SCAN_SAMPLES: usize = 256;
/// Points per shell in the segment scan.
const SEGMENT_SAMPLES: usize = 64;
/// Grid for `∫_{t−s}^t Im M` in the segment scan.
const SEGMENT_GRID: usize = 4096;
/// Sampled directions for `N ≥ 2` homogeneous symbols.
const DIRECTION_SAMPLES: usize = 64;

fn norm(xi: &[i64]) -> f64 {
    xi.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

fn rank(e: EvidenceKind) -> u8 {
    match e {
        EvidenceKind::Exact => 0,
        EvidenceKind::Structural => 1,
        EvidenceKind::Numeric => 2,
    }
}

fn weakest(a: EvidenceKind, b: EvidenceKind) -> EvidenceKind {
    if rank(a) >= rank(b) {
        a
    } else {
        b
    }
}

fn verdict_evidence(v: &Verdict) -> EvidenceKind {
    v.rules.iter().map(|r| r.evidence).fold(EvidenceKind::Exact, weakest)
}

fn growth_evidence(g: &[&GrowthClass]) -> EvidenceKind {
    if g.iter().all(|c| c.symbolic) {
        EvidenceKind::Structural
    } else {
        EvidenceKind::Numeric
    }
}

fn sign_of(f: &PeriodicFn, cfg: &RunConfig) -> SignReport {
    f.sign_report(cfg.sign_tol * f.sup_norm())
}

fn stable(r: &SignReport) -> bool {
    r.kind != SignKind::ChangesSign
}

/// Coefficient values of every term on a uniform grid.
struct Grids {
    n: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Grids {
    fn new(op: &OperatorSpec, n: usize) -> Self {
        Grids {
            n,
            a: op.terms.iter().map(|t| t.a.eval_grid(n)).collect(),
            b: op.terms.iter().map(|t| t.b.eval_grid(n)).collect(),
        }
    }

    /// `Im M(t_j, ξ)` on the grid.
    fn im(&self, op: &OperatorSpec, xi: &[i64]) -> Option<Vec<f64>> {
        let ps = op.term_symbols(xi).ok()?;
        let mut v = vec![0.0; self.n];
        for (j, p) in ps.iter().enumerate() {
            for (i, out) in v.iter_mut().enumerate() {
                *out += self.a[j][i] * p.im + self.b[j][i] * p.re;
            }
        }
        v.iter().all(|x| x.is_finite()).then_some(v)
    }
}

fn scan_shell(dim: usize, k: u32, ximax: u64, samples: usize, seed: u64) -> Vec<Vec<i64>> {
    let pts = shell_points(dim, k, samples, seed);
    let pts: Vec<Vec<i64>> = pts.into_iter().filter(|x| norm(x) <= ximax as f64).collect();
    if dim == 1 && pts.len() > samples {
        // evenly spaced, always keeping both ends
        let step = pts.len() as f64 / samples as f64;
        let mut out: Vec<Vec<i64>> = (0..samples).map(|i| pts[(i as f64 * step) as usize].clone()).collect();
        out.push(pts[pts.len() - 1].clone());
        out.push(pts[pts.len() - 2].clone());
        out.dedup();
        return out;
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignScan {
    pub ximax: u64,
    pub scanned: usize,
    pub violation_count: usize,
    /// The largest violating points, at most 32.
    pub violations: Vec<Vec<i64>>,
    /// Violations per dyadic shell.
    pub shell_violations: Vec<(u32, usize)>,
    /// Radius from which every scanned point is sign-stable; `None` when the top shell has violations.
    pub stable_from: Option<f64>,
}

impl SignScan {
    /// No violations in the top three shells.
    pub fn stable_at_large(&self) -> bool {
        self.stable_from.is_some() && self.shell_violations.iter().rev().take(3).all(|s| s.1 == 0)
    }
}

/// Sign stability of `Im M(·, ξ)` over the dyadic shells up to `ximax`.
pub fn sign_stability_scan(op: &OperatorSpec, ximax: u64, cfg: &RunConfig) -> SignScan {
    let grids = Grids::new(op, cfg.grid.max(256));
    let top = shells_up_to(ximax);
    let samples = if op.dim == 1 { usize::MAX } else { cfg.shell_samples.min(SCAN_SAMPLES) };
    let mut pts: Vec<(u32, Vec<i64>)> = Vec::new();
    for k in 0..=top {
        for xi in shell_points(op.dim, k, samples, cfg.seed) {
            if norm(&xi) <= ximax as f64 {
                pts.push((k, xi));
            }
        }
    }
    let bad: Vec<bool> = pts
        .par_iter()
        .map(|(_, xi)| match grids.im(op, xi) {
            Some(v) => {
                let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let tol = cfg.sign_tol * min.abs().max(max.abs());
                min < -tol && max > tol
            }
            None => false,
        })
        .collect();
    let mut viol: Vec<&Vec<i64>> = pts.iter().zip(&bad).filter(|p| *p.1).map(|p| &p.0 .1).collect();
    viol.sort_by(|a, b| norm(a).partial_cmp(&norm(b)).unwrap().then(a.cmp(b)));
    let shell_violations: Vec<(u32, usize)> =
        (0..=top).map(|k| (k, pts.iter().zip(&bad).filter(|p| *p.1 && p.0 .0 == k).count())).collect();
    let last_bad = viol.last().map(|x| norm(x)).unwrap_or(0.0);
    let stable_from = pts.iter().map(|p| norm(&p.1)).filter(|&r| r > last_bad).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.min(r))));
    let stable_from = if shell_violations.last().is_some_and(|s| s.1 > 0) { None } else { stable_from };
    SignScan {
        ximax,
        scanned: pts.len(),
        violation_count: viol.len(),
        violations: viol.iter().rev().take(32).rev().map(|x| x.to_vec()).collect(),
        shell_violations,
        stable_from,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    /// Term of a sum operator; `None` for a single operator.
    pub term: Option<usize>,
    pub xi: Vec<i64>,
    pub kind: SignKind,
    pub min: f64,
    pub max: f64,
    pub zero_orders: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub directions: Vec<DirectionReport>,
    /// `true` when the directions are a sample (`N ≥ 2` single operators).
    pub sampled: bool,
}

impl DirectionCheck {
    pub fn stable(&self) -> bool {
        self.directions.iter().all(|d| d.kind != SignKind::ChangesSign)
    }

    pub fn violations(&self) -> Vec<&DirectionReport> {
        self.directions.iter().filter(|d| d.kind == SignKind::ChangesSign).collect()
    }
}

fn direction_report(term: Option<usize>, xi: Vec<i64>, f: &PeriodicFn, tol: f64) -> DirectionReport {
    let r = f.sign_report(tol * f.sup_norm());
    DirectionReport { term, xi, kind: r.kind, min: r.min, max: r.max, zero_orders: r.zeros.iter().map(|z| z.order).collect() }
}

/// Sign reports of `Im M(·, ξ)` on the boundary directions of a homogeneous symbol:
/// `ξ = ±1` on the circle, sampled directions for `N ≥ 2`, and `ξ_j = ±1` for each
/// positive-degree term of a sum. `tol` is relative to the sup norm.
pub fn homogeneous_direction_check(op: &OperatorSpec, tol: f64, cfg: &RunConfig) -> Option<DirectionCheck> {
    match op.form {
        Form::Single => {
            op.symbol().homogeneity.as_ref()?;
            let (dirs, sampled) = if op.dim == 1 {
                (vec![vec![1i64], vec![-1]], false)
            } else {
                (shell_points(op.dim, 4, DIRECTION_SAMPLES, cfg.seed), true)
            };
            let directions = dirs
                .into_iter()
                .filter_map(|xi| {
                    let f = op.im_m(&xi).ok()?;
                    Some(direction_report(None, xi, &f, tol))
                })
                .collect();
            Some(DirectionCheck { directions, sampled })
        }
        Form::Sum => {
            let mut directions = Vec::new();
            for (j, t) in op.terms.iter().enumerate() {
                if t.degree()? <= 0.0 {
                    continue;
                }
                for s in [1i64, -1] {
                    let pv = t.p.eval(&[s]).ok()?;
                    let mut xi = vec![0i64; op.dim];
                    xi[t.var.unwrap_or(j)] = s;
                    directions.push(direction_report(Some(j), xi, &t.im_part(pv), tol));
                }
            }
            Some(DirectionCheck { directions, sampled: false })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScan {
    pub ximax: u64,
    /// Per shell: the largest `E(ξ)/log|ξ|`, with the point attaining it and `E` there.
    pub shells: Vec<(u32, f64, Vec<i64>, f64)>,
    pub growth: GrowthKind,
}

/// `E(ξ) = max_{t,s} ∫_{t−s}^t Im M − 2π (Im M₀)⁺` from grid values, which is the smaller
/// of the two growth exponents of the mode solution formulas.
fn segment_exponent(v: &[f64]) -> f64 {
    let n = v.len();
    let h = std::f64::consts::TAU / n as f64;
    // F on two periods by the trapezoid rule
    let mut f = vec![0.0; 2 * n + 1];
    for i in 0..2 * n {
        f[i + 1] = f[i] + 0.5 * h * (v[i % n] + v[(i + 1) % n]);
    }
    let total = f[n];
    let mut best = 0.0f64;
    let mut window: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for j in 0..=2 * n {
        while window.back().is_some_and(|&b| f[b] >= f[j]) {
            window.pop_back();
        }
        window.push_back(j);
        while window.front().is_some_and(|&i| i + n < j) {
            window.pop_front();
        }
        best = best.max(f[j] - f[*window.front().unwrap()]);
    }
    best - total.max(0.0)
}

fn segment_growth(ev: &[(u32, f64)]) -> GrowthKind {
    if ev.len() < 4 {
        return GrowthKind::Undetermined;
    }
    let top = &ev[ev.len() - 4..];
    let kappa = ev.iter().map(|e| e.1).fold(0.0, f64::max);
    let rising = top.windows(2).all(|w| w[1].1 >= 1.1 * w[0].1);
    if rising && top[3].1 >= 2.0 * top[0].1 && top[3].1 >= 1.0 {
        return GrowthKind::SuperLog { witnesses: top.iter().map(|e| e.0).collect() };
    }
    if top[1..].iter().all(|e| e.1 <= 1.1 * top[0].1 + 1e-12) {
        return GrowthKind::AtMostLog { kappa, n0: 2 };
    }
    GrowthKind::Undetermined
}

/// Growth of the solution-formula exponent `E(ξ)` against `log|ξ|` over the dyadic shells.
pub fn segment_exponent_scan(op: &OperatorSpec, ximax: u64, cfg: &RunConfig) -> SegmentScan {
    let grids = Grids::new(op, SEGMENT_GRID);
    // complete shells only
    let top = shells_up_to(ximax + 1) - 1;
    let samples = if op.dim == 1 { SEGMENT_SAMPLES } else { cfg.shell_samples.min(SEGMENT_SAMPLES) };
    let shells: Vec<(u32, f64, Vec<i64>, f64)> = (1..=top)
        .into_par_iter()
        .map(|k| {
            let mut best = (0.0, vec![], 0.0);
            for xi in scan_shell(op.dim, k, ximax, samples, cfg.seed) {
                if let Some(v) = grids.im(op, &xi) {
                    let e = segment_exponent(&v);
                    let r = e / norm(&xi).ln();
                    if best.1.is_empty() || r > best.0 {
                        best = (r, xi, e);
                    }
                }
            }
            (k, best.0, best.1, best.2)
        })
        .collect();
    let ev: Vec<(u32, f64)> = shells.iter().map(|s| (s.0, s.1)).collect();
    SegmentScan { ximax, growth: segment_growth(&ev), shells }
}

/// Smallest `M ≤ 8` with the per-shell minimum of `|ξ|^M |r(ξ)|` bounded away from zero.
fn part_liminf(p: &SymbolSpec, part: Part, ximax: u64, cfg: &RunConfig) -> Option<u32> {
    let top = shells_up_to(ximax);
    if top < 4 {
        return None;
    }
    let vals: Vec<Vec<(f64, f64)>> = (1..=top)
        .map(|k| {
            p.shell_points(k, cfg.shell_samples, cfg.seed)
                .iter()
                .filter(|x| norm(x) <= ximax as f64)
                .filter_map(|x| p.part(x, part).ok().map(|v| (norm(x), v.abs())))
                .collect()
        })
        .collect();
    (0..=8u32).find(|&m| {
        let per: Vec<f64> = vals.iter().map(|s| s.iter().map(|v| v.0.powi(m as i32) * v.1).fold(f64::INFINITY, f64::min)).collect();
        if per.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return false;
        }
        let tail = &per[per.len() - 4..];
        tail.iter().cloned().fold(f64::INFINITY, f64::min) >= 0.5 * tail[0]
    })
}

/// Per-shell growth of `max_j |num/den|^{1/m_j} |num|` for the vanishing-order rule.
fn vanishing_growth(p: &SymbolSpec, num: Part, orders: &[u32], ximax: u64, cfg: &RunConfig) -> GrowthKind {
    let top = shells_up_to(ximax);
    let ev: Vec<(u32, f64)> = (1..=top)
        .map(|k| {
            let m = p
                .shell_points(k, cfg.shell_samples, cfg.seed)
                .iter()
                .filter(|x| norm(x) <= ximax as f64)
                .filter_map(|x| {
                    let z = p.eval(x).ok()?;
                    let (n, d) = match num {
                        Part::Re => (z.re, z.im),
                        Part::Im => (z.im, z.re),
                    };
                    if d == 0.0 {
                        return None;
                    }
                    let h = orders.iter().map(|&m| (n / d).abs().powf(1.0 / m as f64) * n.abs()).fold(0.0, f64::max);
                    Some(h / norm(x).ln())
                })
                .fold(0.0, f64::max);
            (k, m)
        })
        .collect();
    numeric_growth(&ev)
}

struct Finding {
    entry: RuleEntry,
    certificates: Vec<Value>,
}

struct Bank<'a> {
    cfg: &'a RunConfig,
    scope: Value,
    findings: Vec<Finding>,
    notes: Vec<RuleEntry>,
    diagnostics: Vec<String>,
}

impl Bank<'_> {
    fn found(&mut self, id: &str, anchor: &str, outcome: Status, evidence: EvidenceKind, detail: Value, certificates: Vec<Value>) {
        let scope = (evidence == EvidenceKind::Numeric).then(|| self.scope.clone());
        self.findings.push(Finding { entry: rule(id, anchor, outcome, evidence, detail, scope), certificates });
    }

    fn unmet(&mut self, msg: String) {
        self.diagnostics.push(msg);
    }
}

/// Decides global hypoellipticity of `op` by the rule bank.
pub fn classify(op: &OperatorSpec, cfg: &RunConfig) -> Verdict {
    let ximax = cfg.ximax_scan.min(if op.dim == 1 { 1 << 16 } else { 4096 });
    let mut bank = Bank { cfg, scope: json!({"ximax": ximax}), findings: vec![], notes: vec![], diagnostics: vec![] };

    // resonances
    match resonance_scan(op, ximax, cfg.resonance_tol, cfg) {
        Ok(rs) if rs.infinite_trend => {
            let xi: Vec<&Vec<i64>> = rs.resonant.iter().rev().take(8).collect();
            bank.found(
                "resonance-trend",
                "M₀(ξ) ∈ Z for infinitely many ξ",
                Status::NotGh,
                EvidenceKind::Numeric,
                json!({"resonant_count": rs.resonant.len(), "shell_counts": rs.shell_counts}),
                vec![json!({"recipe": "ResonantNull", "xi": xi})],
            );
        }
        Ok(_) => {}
        Err(e) => bank.unmet(format!("resonance scan: {e}")),
    }

    // constant-coefficient operator
    let l0 = gh_verdict_l0(op, cfg);
    let l0_ev = verdict_evidence(&l0);
    bank.notes.extend(l0.rules.iter().cloned());
    if l0.status == Status::NotGh {
        let mut certs = l0.certificates.clone();
        let resonant = l0.rules.iter().any(|r| r.id == "averaged-resonant");
        certs.push(json!({"recipe": if resonant { "ResonantNull" } else { "Ncm2" }}));
        bank.found(
            "constant-coefficient-necessity",
            "L globally hypoelliptic implies L₀ globally hypoelliptic",
            Status::NotGh,
            l0_ev,
            json!({"l0_rules": l0.rules.iter().map(|r| r.id.clone()).collect::<Vec<_>>()}),
            certs,
        );
    } else if l0.status == Status::Undecided {
        for d in &l0.diagnostics {
            bank.unmet(format!("L₀: {d}"));
        }
    }
    let l0_gh = l0.status == Status::Gh;

    match op.form {
        Form::Single => single_rules(op, ximax, &l0, l0_ev, &mut bank),
        Form::Sum => sum_rules(op, l0_gh, l0_ev, &mut bank),
    }

    // sign stability at large |ξ|
    let scan = sign_stability_scan(op, ximax, cfg);
    if l0_gh && scan.stable_at_large() {
        bank.found(
            "sign-stable-at-large",
            "Im M(·, ξ) does not change sign for large |ξ|",
            Status::Gh,
            EvidenceKind::Numeric,
            json!({"stable_from": scan.stable_from, "violation_count": scan.violation_count, "scanned": scan.scanned}),
            vec![],
        );
    } else if !scan.stable_at_large() {
        bank.unmet(format!("Im M changes sign at {} of {} scanned ξ, up to |ξ| = {:.0}", scan.violation_count, scan.scanned, scan.violations.last().map(|x| norm(x)).unwrap_or(0.0)));
    }

    // growth of the solution-formula exponent
    let seg = segment_exponent_scan(op, ximax, cfg);
    let peaks: Vec<Value> = seg.shells.iter().rev().take(4).map(|s| json!({"shell": s.0, "xi": s.2, "exponent": s.3})).collect();
    match &seg.growth {
        GrowthKind::SuperLog { witnesses } => bank.found(
            "segment-exponent-superlog",
            "max ∫_{t−s}^t Im M − 2π(Im M₀)⁺ grows faster than log|ξ|",
            Status::NotGh,
            EvidenceKind::Numeric,
            json!({"witness_shells": witnesses, "peaks": peaks}),
            vec![json!({"kind": "segment_exponent_growth", "peaks": peaks})],
        ),
        GrowthKind::AtMostLog { kappa, .. } if l0_gh => bank.found(
            "segment-exponent-log",
            "max ∫_{t−s}^t Im M − 2π(Im M₀)⁺ = O(log|ξ|)",
            Status::Gh,
            EvidenceKind::Numeric,
            json!({"kappa": kappa, "peaks": peaks}),
            vec![],
        ),
        _ => {}
    }

    let mut v = decide(bank);
    v.suspect = l0.suspect;
    v
}

fn single_rules(op: &OperatorSpec, ximax: u64, l0: &Verdict, l0_ev: EvidenceKind, bank: &mut Bank) {
    let cfg = bank.cfg;
    let p = op.symbol();
    let alpha = p.classify_growth(Part::Re, ximax, cfg.shell_samples, cfg.seed);
    let beta = p.classify_growth(Part::Im, ximax, cfg.shell_samples, cfg.seed);
    let sa = sign_of(op.a(), cfg);
    let sb = sign_of(op.b(), cfg);
    let gev = growth_evidence(&[&alpha, &beta]);
    let l0_gh = l0.status == Status::Gh;
    let decisive = l0.status != Status::Undecided;
    let classes = json!({"alpha": alpha.kind, "beta": beta.kind, "symbolic": alpha.symbolic && beta.symbolic});

    // growth dichotomy
    if alpha.is_log() && beta.is_log() && decisive {
        bank.found(
            "growth-both-log",
            "α, β = O(log|ξ|): L globally hypoelliptic iff L₀ is",
            l0.status,
            weakest(l0_ev, gev),
            json!({"classes": classes}),
            vec![],
        );
    }
    for (side, own, other, s, name) in [("a", &alpha, &beta, &sa, "a"), ("b", &beta, &alpha, &sb, "b")] {
        if !own.is_log() || other.is_log() {
            continue;
        }
        let ev = growth_evidence(&[own]);
        if stable(s) && l0_gh {
            bank.found(
                &format!("growth-{side}-side-stable"),
                &format!("{name}(t) does not change sign and L₀ is globally hypoelliptic"),
                Status::Gh,
                weakest(l0_ev, ev),
                json!({"classes": classes, "sign": s.kind}),
                vec![],
            );
        } else if !stable(s) && other.is_super() {
            let certs = if side == "a" { vec![json!({"recipe": "SignChange"})] } else { vec![] };
            bank.found(
                &format!("growth-{side}-side-sign-change"),
                &format!("{name}(t) changes sign while the other part is super-logarithmic"),
                Status::NotGh,
                weakest(ev, growth_evidence(&[other])),
                json!({"classes": classes, "sign": s.kind}),
                certs,
            );
        }
    }
    if !(alpha.is_log() || beta.is_log()) {
        bank.unmet(format!("growth classes α {:?}, β {:?}: no part at most logarithmic", alpha.kind, beta.kind));
    }

    // declared split
    if let Some(sp) = &op.split {
        let g = sp.gamma.classify_growth(Part::Re, ximax, cfg.shell_samples, cfg.seed);
        let e = sp.eta.classify_growth(Part::Re, ximax, cfg.shell_samples, cfg.seed);
        let st = sign_of(&sp.a_tilde, cfg);
        let se = sign_of(&sp.b_tilde, cfg);
        let ev = weakest(l0_ev, growth_evidence(&[&g, &e]));
        let detail = json!({"gamma": g.kind, "eta": e.kind, "a_tilde": st.kind, "b_tilde": se.kind});
        if g.is_log() || e.is_log() {
            let bad = (g.is_super() && !stable(&st)) || (e.is_super() && !stable(&se));
            let known = (g.is_log() || g.is_super()) && (e.is_log() || e.is_super());
            if bad {
                bank.found("split-sign-change", "Im M = ã γ + b̃ η with a sign-changing factor on a super-logarithmic part", Status::NotGh, ev, detail, vec![]);
            } else if known && decisive {
                bank.found("split-stable", "Im M = ã γ + b̃ η with sign-stable factors on super-logarithmic parts", l0.status, ev, detail, vec![]);
            }
        } else {
            bank.unmet("declared split has no logarithmic part".into());
        }
    }

    // ratio accumulation points
    let ratio_side = |num: Part, den_class: &GrowthClass, bank: &mut Bank| {
        if !den_class.is_super() {
            return;
        }
        let (f, g) = match num {
            Part::Re => (op.a(), op.b()),
            Part::Im => (op.b(), op.a()),
        };
        let clusters = match p.ratio_accumulation(num, ximax, RATIO_SHELLS, cfg.cluster_width, cfg.shell_samples, cfg.seed) {
            Ok(c) => c,
            Err(e) => {
                bank.unmet(format!("ratio accumulation: {e}"));
                return;
            }
        };
        let mut ks: Vec<(f64, &str)> = clusters.iter().filter(|c| c.count >= CLUSTER_MIN_COUNT).map(|c| (c.k, "cluster")).collect();
        if p.little_o(num, ximax, cfg.little_o_tol, cfg.shell_samples, cfg.seed) {
            ks.push((0.0, "little-o"));
        }
        for (k, how) in ks {
            if robust_sign_change(f, g, k - cfg.cluster_width, k + cfg.cluster_width, cfg) {
                let cert = match num {
                    Part::Re => json!({"recipe": "Ar1", "k": k}),
                    Part::Im => json!({"recipe": "Ar1", "k": -k, "rotated": "a → b, b → −a, p → i p"}),
                };
                let (id, anchor) = match num {
                    Part::Re => ("ratio-sign-change", "α/β → K along |β| ≫ log|ξ| and a + bK changes sign"),
                    Part::Im => ("ratio-sign-change-mirror", "β/α → C along |α| ≫ log|ξ| and b + aC changes sign"),
                };
                bank.found(id, anchor, Status::NotGh, EvidenceKind::Numeric, json!({"k": k, "source": how}), vec![cert]);
                return;
            }
        }
    };
    ratio_side(Part::Re, &beta, bank);
    ratio_side(Part::Im, &alpha, bank);

    // vanishing-order sufficiency
    for (num, den_class, s) in [(Part::Re, &beta, &sa), (Part::Im, &alpha, &sb)] {
        if !den_class.is_super() || !stable(s) || s.kind == SignKind::IdenticallyZero || !l0_gh {
            continue;
        }
        let den = if num == Part::Re { Part::Im } else { Part::Re };
        let orders: Option<Vec<u32>> = s.zeros.iter().map(|z| z.order).collect();
        let Some(orders) = orders else {
            bank.unmet("coefficient has a zero of infinite order".into());
            continue;
        };
        let Some(mexp) = part_liminf(p, den, ximax, cfg) else {
            continue;
        };
        if !p.little_o(num, ximax, cfg.little_o_tol, cfg.shell_samples, cfg.seed) {
            continue;
        }
        let growth = if orders.is_empty() { GrowthKind::AtMostLog { kappa: 0.0, n0: 0 } } else { vanishing_growth(p, num, &orders, ximax, cfg) };
        if matches!(growth, GrowthKind::AtMostLog { .. }) {
            let id = if num == Part::Re { "vanishing-order" } else { "vanishing-order-mirror" };
            bank.found(
                id,
                "sign-stable coefficient vanishing of finite order with |α/β|^{1/m}|α| = O(log|ξ|)",
                Status::Gh,
                EvidenceKind::Numeric,
                json!({"orders": orders, "liminf_exponent": mexp}),
                vec![],
            );
        }
    }

    // homogeneous symbol
    if let Some(h) = &p.homogeneity {
        let m = h.degree.to_f64();
        if m <= 0.0 {
            if decisive {
                bank.found("homogeneous-nonpositive", "homogeneous of degree m ≤ 0: L globally hypoelliptic iff L₀ is", l0.status, weakest(l0_ev, EvidenceKind::Structural), json!({"degree": m}), vec![]);
            }
        } else if let Some(dc) = homogeneous_direction_check(op, cfg.sign_tol, cfg) {
            let detail = json!({"degree": m, "directions": dc.directions.iter().map(|d| json!({"xi": d.xi, "sign": d.kind})).collect::<Vec<_>>()});
            let ev = if dc.sampled { EvidenceKind::Numeric } else { EvidenceKind::Structural };
            if !dc.stable() {
                bank.found("homogeneous-direction-sign-change", "Im M(·, ξ₀) changes sign for some ξ₀ ≠ 0", Status::NotGh, EvidenceKind::Structural, detail, vec![]);
            } else if l0_gh {
                bank.found("homogeneous-directions-stable", "Im M(·, ξ) does not change sign for all ξ ≠ 0 and L₀ is globally hypoelliptic", Status::Gh, weakest(l0_ev, ev), detail, vec![]);
            }
        }
    }
}

fn sum_rules(op: &OperatorSpec, l0_gh: bool, l0_ev: EvidenceKind, bank: &mut Bank) {
    let cfg = bank.cfg;
    let Some(dc) = homogeneous_direction_check(op, cfg.sign_tol, cfg) else {
        bank.unmet("sum terms need declared homogeneity".into());
        return;
    };
    let dirs = json!(dc.directions.iter().map(|d| json!({"term": d.term, "xi": d.xi, "sign": d.kind})).collect::<Vec<_>>());
    if !dc.stable() {
        bank.found("sum-term-sign-change", "Im M_j(·, ±1) changes sign for a positive-degree term", Status::NotGh, EvidenceKind::Structural, json!({"directions": dirs}), vec![]);
        return;
    }
    // pairwise dependence of the boundary functions of positive-degree terms
    let pos: Vec<usize> = op.terms.iter().enumerate().filter(|t| t.1.degree().is_some_and(|m| m > 0.0)).map(|t| t.0).collect();
    let bound = |j: usize, s: i64| -> Option<PeriodicFn> {
        let t = &op.terms[j];
        Some(t.im_part(t.p.eval(&[s]).ok()?))
    };
    let mut failures: Vec<Value> = Vec::new();
    let mut coprime_failure = false;
    for (x, &j) in pos.iter().enumerate() {
        for &k in &pos[x + 1..] {
            for s in [1i64, -1] {
                for r in [1i64, -1] {
                    let (Some(f), Some(g)) = (bound(j, s), bound(k, r)) else { continue };
                    let (dep, det) = f.linear_dependence(&g, cfg.gram_tol);
                    if !dep {
                        failures.push(json!({"terms": [j, k], "signs": [s, r], "gram": det}));
                        let (mj, mk) = (op.terms[j].degree().unwrap(), op.terms[k].degree().unwrap());
                        if is_pos_int(mj) && is_pos_int(mk) && gcd(mj as u64, mk as u64) == 1 {
                            coprime_failure = true;
                        }
                    }
                }
            }
        }
    }
    if failures.is_empty() {
        if l0_gh {
            bank.found(
                "sum-dependent-stable",
                "L₀ globally hypoelliptic, boundary functions pairwise dependent and sign-stable",
                Status::Gh,
                weakest(l0_ev, EvidenceKind::Structural),
                json!({"directions": dirs}),
                vec![],
            );
        }
    } else if coprime_failure {
        bank.found(
            "sum-coprime-independence",
            "independent boundary functions for coprime positive integer degrees",
            Status::NotGh,
            EvidenceKind::Structural,
            json!({"independent": failures}),
            vec![],
        );
    } else {
        bank.unmet("boundary functions independent but degrees are not coprime positive integers".into());
    }

    // real symbols with pairwise coprime integer degrees
    let real = op.terms.iter().all(|t| [1i64, -1].iter().all(|&s| t.p.eval(&[s]).is_ok_and(|z| z.im == 0.0)));
    let degs: Vec<f64> = op.terms.iter().filter_map(|t| t.degree()).collect();
    let coprime = degs.len() == op.terms.len()
        && degs.iter().all(|&m| is_pos_int(m))
        && degs.iter().enumerate().all(|(i, &a)| degs[i + 1..].iter().all(|&b| gcd(a as u64, b as u64) == 1));
    if real && coprime {
        let bs: Vec<&PeriodicFn> = op.terms.iter().map(|t| &t.b).filter(|b| b.sup_norm() > 0.0).collect();
        let span_le_one = bs.iter().enumerate().all(|(i, f)| bs[i + 1..].iter().all(|g| f.linear_dependence(g, cfg.gram_tol).0));
        let b_stable = op.terms.iter().all(|t| stable(&sign_of(&t.b, cfg)));
        let detail = json!({"span_at_most_one": span_le_one, "b_stable": b_stable});
        if !(span_le_one && b_stable) {
            bank.found("sum-real-coprime", "real symbols, coprime degrees: dim span{b_j} ≤ 1 and each b_j sign-stable", Status::NotGh, EvidenceKind::Structural, detail, vec![]);
        } else if l0_gh {
            bank.found("sum-real-coprime", "real symbols, coprime degrees: dim span{b_j} ≤ 1 and each b_j sign-stable", Status::Gh, weakest(l0_ev, EvidenceKind::Structural), detail, vec![]);
        }
    }
}

/// `f + K g` changes sign for every `K` in `[lo, hi]`. The sets of `K` with `f + K g ≥ 0`
/// (resp. `≤ 0`) are closed intervals, so it suffices that both miss `[lo, hi]`.
fn robust_sign_change(f: &PeriodicFn, g: &PeriodicFn, lo: f64, hi: f64, cfg: &RunConfig) -> bool {
    let n = SEGMENT_GRID;
    let (fv, gv) = (f.eval_grid(n), g.eval_grid(n));
    let tol = cfg.sign_tol * (f.sup_norm() + lo.abs().max(hi.abs()) * g.sup_norm());
    [1.0, -1.0].iter().all(|&sg| {
        // {K : sg·(f + K g) ≥ −tol everywhere} = [kmin, kmax]
        let (mut kmin, mut kmax) = (f64::NEG_INFINITY, f64::INFINITY);
        for (&a, &b) in fv.iter().zip(&gv) {
            let (a, b) = (sg * a + tol, sg * b);
            if b > 0.0 {
                kmin = kmin.max(-a / b);
            } else if b < 0.0 {
                kmax = kmax.min(-a / b);
            } else if a < 0.0 {
                return true;
            }
        }
        kmin > kmax || kmax < lo || kmin > hi
    })
}

fn is_pos_int(m: f64) -> bool {
    m >= 1.0 && m.fract() == 0.0
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn priority(f: &Finding) -> u8 {
    match (f.entry.evidence, f.entry.outcome) {
        (EvidenceKind::Exact, Status::NotGh) => 0,
        (EvidenceKind::Exact, _) => 1,
        (EvidenceKind::Structural, _) => 2,
        _ => 3,
    }
}

fn decide(bank: Bank) -> Verdict {
    let Bank { findings, notes, mut diagnostics, .. } = bank;
    let best = findings.iter().enumerate().min_by_key(|(i, f)| (priority(f), *i)).map(|(i, _)| i);
    let Some(best) = best else {
        let mut v = Verdict::undecided(diagnostics);
        v.rules = notes;
        return v;
    };
    let status = findings[best].entry.outcome;
    for f in findings.iter().filter(|f| f.entry.outcome != status) {
        diagnostics.push(format!(
            "conflict: {} ({:?}) says {:?}, overridden by {} ({:?})",
            f.entry.id, f.entry.evidence, f.entry.outcome, findings[best].entry.id, findings[best].entry.evidence
        ));
    }
    let mut v = Verdict::new(status);
    let mut order: Vec<usize> = vec![best];
    order.extend((0..findings.len()).filter(|&i| i != best));
    for i in order {
        let f = &findings[i];
        v.rules.push(f.entry.clone());
        if f.entry.outcome == status {
            v.certificates.extend(f.certificates.iter().cloned());
        }
    }
    v.rules.extend(notes);
    v.diagnostics = diagnostics;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped(name: &str) -> OperatorSpec {
        let path = format!("{}/operators/{name}.json", env!("CARGO_MANIFEST_DIR"));
        OperatorSpec::from_json_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn segment_exponent_of_simple_profiles() {
        let n = 1024;
        let h = std::f64::consts::TAU / n as f64;
        // positive integrand: e2 = 0
        let pos: Vec<f64> = (0..n).map(|j| 2.0 + (j as f64 * h).sin()).collect();
        assert!(segment_exponent(&pos).abs() < 1e-9);
        // sin: best segment is [0, π] with integral 2
        let s: Vec<f64> = (0..n).map(|j| (j as f64 * h).sin()).collect();
        assert!((segment_exponent(&s) - 2.0).abs() < 1e-4);
        let neg: Vec<f64> = (0..n).map(|_| -1.0).collect();
        assert_eq!(segment_exponent(&neg), 0.0);
    }

    #[test]
    fn identically_zero_is_stable() {
        let op = OperatorSpec::from_json_str(r#"{"dim":1,"a":1,"b":0,"symbol":"xi1"}"#).unwrap();
        let s = sign_stability_scan(&op, 256, &RunConfig::default());
        assert_eq!(s.violation_count, 0);
        assert!(s.stable_at_large());
    }

    #[test]
    fn direction_check_on_circle() {
        let op = shipped("sum_independent");
        let dc = homogeneous_direction_check(&op, 1e-9, &RunConfig::default()).unwrap();
        assert_eq!(dc.directions.len(), 4);
        assert!(dc.stable());
    }

    #[test]
    fn regression_battery() {
        let cfg = RunConfig::default();
        let want = [
            ("exampcc", Status::Gh),
            ("exampcc2", Status::Gh),
            ("exampsign1", Status::Gh),
            ("exampnew1", Status::NotGh),
            ("exampnew2", Status::Gh),
            ("vanishing_first", Status::Gh),
            ("vanishing_second", Status::NotGh),
            ("sum_independent", Status::NotGh),
            ("sqrt2_quarter", Status::NotGh),
            ("sqrt2_half", Status::Gh),
        ];
        let mut bad = Vec::new();
        for (name, status) in want {
            let v = classify(&shipped(name), &cfg);
            if v.status != status {
                bad.push((name, v.status, v.diagnostics));
            }
        }
        assert!(bad.is_empty(), "mismatches: {bad:?}");
    }
}
