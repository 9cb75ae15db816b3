//! Singular pairs `(f̂, û)` from the non-hypoellipticity constructions, checked numerically.
//!
//! Every kit emits one mode per sequence element `ξ_n` together with a record of
//! `sup|f̂|`, the value `û(t_n)` and a lower bound obtained by direct quadrature.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::{PI, TAU};

use crate::config::{RunConfig, EXPONENT_BUDGET};
use crate::const_coeff::{is_resonant, lattice_points, resonance_scan};
use crate::diophantine::certified_prefix;
use crate::error::{Error, Result};
use crate::exact::{ratio_f64, ArithClass, Exact};
use crate::mode_solver::{is_rapid, FnSource, ModeSolver, ModeSource};
use crate::operator::{Form, OperatorSpec};
use crate::periodic::{bump, glued_parabola, polish_max, PeriodicFn};
use crate::scaled::Scaled;
use crate::symbol::{linear_fit, Part, SymbolSpec};

/// Grid used to locate segment maximizers before golden-section refinement.
const MAXIMIZER_GRID: usize = 8192;
/// Largest sequence index emitted.
const MAX_TERMS: usize = 12;
/// Largest `|ξ|` a kit sequence may reach when the exponent budget does not stop it first.
const KIT_XIMAX: u64 = 1 << 32;
/// Quadrature intervals for the independent checks.
const QUAD_INTERVALS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recipe {
    ResonantNull,
    Ncm2,
    SignChange,
    Ar1,
    VanishingOrder51,
}

/// Verification of one emitted mode. Times are in the coordinates of the input operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KitRecord {
    pub n: usize,
    pub xi: Vec<i64>,
    pub norm: f64,
    /// `Im p(ξ_n)`, or the driving growth parameter of the recipe.
    pub beta: f64,
    pub t_n: f64,
    pub s_n: f64,
    /// Exponent removed from the source, e.g. `max ∫_{t-s}^t Im M`.
    pub m_n: f64,
    pub ln_theta: f64,
    pub ln_sup_f: f64,
    pub ln_sup_u: f64,
    pub ln_u_at: f64,
    /// Independent quadrature value of `|û(t_n)|`.
    pub ln_u_quad: f64,
    /// Verified lower bound for `|û(t_n)|`.
    pub ln_lower: f64,
    /// `ln` of the Laplace prediction `ψ·sqrt(2π/θ'')`, when the maximum is nondegenerate.
    pub ln_laplace: Option<f64>,
    /// Gaussian width of the maximum fits inside the quarter window of the bump.
    pub asymptotic: bool,
    pub residual: f64,
    pub decay_ok: bool,
    pub lower_ok: bool,
}

/// Grid values of one emitted pair.
#[derive(Debug, Clone)]
pub struct KitMode {
    pub xi: Vec<i64>,
    pub f: Vec<Scaled>,
    pub u: Vec<Scaled>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleKit {
    pub recipe: Recipe,
    pub operator: String,
    /// The construction ran on `−L` with `t ↦ −t`.
    pub reflected: bool,
    /// Coefficients were evaluated at `t + shift` (after reflection).
    pub shift: f64,
    pub records: Vec<KitRecord>,
    #[serde(skip)]
    pub modes: Vec<KitMode>,
    pub f_rapid: bool,
    pub u_rapid: bool,
    /// Log-log slope of the verified lower bounds.
    pub slope: Option<f64>,
    pub slope_axis: String,
    pub limit: Value,
    pub diagnostics: Vec<String>,
}

impl CounterexampleKit {
    fn new(recipe: Recipe, operator: &str) -> Self {
        CounterexampleKit {
            recipe,
            operator: operator.to_string(),
            reflected: false,
            shift: 0.0,
            records: vec![],
            modes: vec![],
            f_rapid: false,
            u_rapid: false,
            slope: None,
            slope_axis: "beta".into(),
            limit: Value::Null,
            diagnostics: vec![],
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("kit serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,xi,beta,t_n,s_n,m_n,ln_sup_f,ln_sup_u,ln_u_at,ln_lower,residual,decay_ok,lower_ok\n");
        for r in &self.records {
            let xi: Vec<String> = r.xi.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!(
                "{},{},{:e},{:.12},{:.12},{:e},{:e},{:e},{:e},{:e},{:e},{},{}\n",
                r.n,
                xi.join(" "),
                r.beta,
                r.t_n,
                r.s_n,
                r.m_n,
                r.ln_sup_f,
                r.ln_sup_u,
                r.ln_u_at,
                r.ln_lower,
                r.residual,
                r.decay_ok,
                r.lower_ok
            ));
        }
        out
    }

    /// Every record passed its decay and lower-bound checks.
    pub fn verified(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.decay_ok && r.lower_ok)
    }

    fn finish(&mut self, k_rapid: f64) {
        let pts = |g: &dyn Fn(&KitRecord) -> f64| -> Vec<(f64, f64)> { self.records.iter().map(|r| (r.norm, g(r))).collect() };
        self.f_rapid = is_rapid(&pts(&|r| r.ln_sup_f), k_rapid);
        self.u_rapid = is_rapid(&pts(&|r| r.ln_sup_u), k_rapid);
    }

    fn fit_slope(&mut self, axis: &str, x: impl Fn(&KitRecord) -> f64, only_asymptotic: bool) {
        let used: Vec<&KitRecord> = self.records.iter().filter(|r| !only_asymptotic || r.asymptotic).filter(|r| r.ln_lower.is_finite()).collect();
        self.slope_axis = axis.into();
        if used.len() >= 3 {
            let xs: Vec<f64> = used.iter().map(|r| x(r).ln()).collect();
            let ys: Vec<f64> = used.iter().map(|r| r.ln_lower).collect();
            self.slope = Some(linear_fit(&xs, &ys).0);
        } else {
            self.diagnostics.push(format!("only {} records in the fitting range", used.len()));
        }
    }
}

/// Composite Simpson rule with an even number of intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `1 − e^{−2πiM₀}`.
fn theta(m0: Complex64) -> Complex64 {
    Complex64::new(1.0, 0.0) - (-TAU * Complex64::i() * m0).exp()
}

fn norm(xi: &[i64]) -> f64 {
    xi.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

fn ln_sup(v: &[Scaled]) -> f64 {
    v.iter().map(Scaled::ln_abs).fold(f64::NEG_INFINITY, f64::max)
}

/// Homogeneous solutions on an infinite resonant set, normalized to `max |û| = 1`.
pub fn resonant_null(op: &OperatorSpec, count: usize, cfg: &RunConfig) -> Result<CounterexampleKit> {
    let scan = resonance_scan(op, cfg.ximax_scan, cfg.resonance_tol, cfg)?;
    let found: Vec<Vec<i64>> = scan.resonant.iter().filter(|xi| xi.iter().any(|&x| x != 0)).cloned().collect();
    if found.len() < count || count == 0 {
        return Err(Error::NotEnoughResonances { found: found.len(), wanted: count.max(1) });
    }
    let solver = ModeSolver::new(op, cfg.grid)?;
    let mut kit = CounterexampleKit::new(Recipe::ResonantNull, &op.name);
    kit.slope_axis = "xi".into();
    for (i, xi) in found.iter().take(count).enumerate() {
        let field = solver.field(xi)?;
        let sup_m: f64 = op.terms.iter().zip(&field.symbols).map(|(t, p)| (t.a.sup_norm() + t.b.sup_norm()) * p.norm()).sum();
        let mut n = cfg.grid;
        while (n as f64) < 8.0 * (sup_m + 16.0) && n < 1 << 20 {
            n *= 2;
        }
        let g0 = solver.g_at(&field, 0.0);
        let g: Vec<Complex64> = (0..n).map(|j| solver.g_at(&field, TAU * j as f64 / n as f64) - g0).collect();
        let (jmax, top) = g.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (j, v)| if v.im > b.1 { (j, v.im) } else { b });
        let u: Vec<Complex64> = g.iter().map(|v| (-Complex64::i() * v - top).exp()).collect();
        // plug back: spectral derivative against -iMû
        let mut spec = u.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut spec);
        for (k, v) in spec.iter_mut().enumerate() {
            let fr = if k < n / 2 { k as f64 } else if k > n / 2 { k as f64 - n as f64 } else { 0.0 };
            *v *= Complex64::i() * fr / n as f64;
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..n {
            let m = op.m_at(TAU * j as f64 / n as f64, xi)?;
            let r = spec[j] + Complex64::i() * m * u[j];
            worst = worst.max(r.norm());
            scale = scale.max((m * u[j]).norm());
        }
        let residual = if scale > 0.0 { worst / scale } else { worst };
        let sup_u = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let t_n = TAU * jmax as f64 / n as f64;
        let nm = norm(xi);
        kit.records.push(KitRecord {
            n: i + 1,
            xi: xi.clone(),
            norm: nm,
            beta: field.m0.im,
            t_n,
            s_n: 0.0,
            m_n: top,
            ln_theta: f64::NEG_INFINITY,
            ln_sup_f: f64::NEG_INFINITY,
            ln_sup_u: sup_u.ln(),
            ln_u_at: u[jmax].norm().ln(),
            ln_u_quad: 0.0,
            ln_lower: 0.0,
            ln_laplace: None,
            asymptotic: true,
            residual,
            decay_ok: true,
            lower_ok: (u[jmax].norm() - 1.0).abs() <= 1e-12 && sup_u <= 1.0 + 1e-12,
        });
        let stride = n / cfg.grid;
        kit.modes.push(KitMode {
            xi: xi.clone(),
            f: vec![Scaled::ZERO; cfg.grid],
            u: (0..cfg.grid).map(|j| Scaled::new(u[j * stride])).collect(),
        });
    }
    kit.limit = json!({ "resonant_found": found.len(), "infinite_trend": scan.infinite_trend });
    kit.finish(cfg.k_rapid);
    Ok(kit)
}

/// Operator after the sign reduction and the translation that centres the limit maximizer.
struct Prepared {
    op: OperatorSpec,
    reflected: bool,
    shift: f64,
}

impl Prepared {
    /// Reflect when `Im M₀ > 0` at the probe, then move the probe's maximizing segment to be centred at `π`.
    fn new(op: &OperatorSpec, probe: &[i64]) -> Result<Self> {
        let reflected = op.m0(probe)?.im > 0.0;
        let base = if reflected { op.reflect() } else { op.clone() };
        let ext = base.im_m(probe)?.max_segment_integral(MAXIMIZER_GRID);
        let shift = ext.t - ext.s / 2.0 - PI;
        Ok(Prepared { op: base.translate(shift), reflected, shift })
    }

    /// Kit time to the time variable of the input operator.
    fn original_time(&self, t: f64) -> f64 {
        let u = t + self.shift;
        if self.reflected { (-u).rem_euclid(TAU) } else { u.rem_euclid(TAU) }
    }
}

/// Golden-section maximizer of a unimodal function on `[lo, hi]`.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(x1) >= f(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    0.5 * (lo + hi)
}

/// `max ∫_u^t f` over `0 ≤ u ≤ t ≤ 2π`, as `(value, t, t − u)`.
fn inner_segment_max(f: &PeriodicFn, grid: usize) -> (f64, f64, f64) {
    let anti = f.antiderivative();
    let h = TAU / grid as f64;
    let a: Vec<f64> = (0..=grid).map(|j| anti.eval(j as f64 * h)).collect();
    let (mut best, mut bt, mut bu) = (0.0, 0, 0);
    let mut lo = 0;
    for j in 0..=grid {
        if a[j] < a[lo] {
            lo = j;
        }
        if a[j] - a[lo] > best {
            best = a[j] - a[lo];
            bt = j;
            bu = lo;
        }
    }
    let (tl, th) = ((bt as f64 * h - h).max(0.0), (bt as f64 * h + h).min(TAU));
    let t = polish_max(&|x| f.eval(x), golden(|x| anti.eval(x), tl, th), tl, th);
    let (ul, uh) = ((bu as f64 * h - h).max(0.0), (bu as f64 * h + h).min(t));
    let u = polish_max(&|x| -f.eval(x), golden(|x| -anti.eval(x), ul, uh), ul, uh);
    let refined = anti.eval(t) - anti.eval(u);
    if refined >= best {
        (refined, t, t - u)
    } else {
        (best, bt as f64 * h, (bt - bu) as f64 * h)
    }
}

/// Laplace-type mode: the source concentrates at the start `σ_n` of the maximizing segment of `∫ Im M`.
fn laplace_mode(prep: &Prepared, solver: &ModeSolver, xi: &[i64], n: usize, beta: f64) -> Result<(KitRecord, KitMode)> {
    let op = &prep.op;
    let im = op.im_m(xi)?;
    let global = im.max_segment_integral(MAXIMIZER_GRID).value;
    let (m_n, t_n, s_n) = inner_segment_max(&im, MAXIMIZER_GRID);
    let sigma = t_n - s_n;
    if m_n < global - 1e-9 * (1.0 + global.abs()) || !(sigma > 0.0 && t_n < TAU && s_n > 0.0) {
        return Err(Error::HypothesesUnmet(format!("maximizing segment of xi={xi:?} leaves (0, 2π)")));
    }
    let eps = sigma.min(s_n).min(TAU - sigma) / 8.0;
    let m0 = op.m0(xi)?;
    if m0.im > 0.0 {
        return Err(Error::HypothesesUnmet(format!("Im M0 > 0 at xi={xi:?} after reduction")));
    }
    let th = theta(m0);
    let scale = Scaled::new(th) * Scaled::exp_of(Complex64::new(-m_n, 0.0));
    let phi = move |t: f64| bump((t - sigma) / eps);
    let src = FnSource { f: move |t: f64| Complex64::new(phi(t), 0.0), scale, gauge: Some(t_n), feature: eps };
    let sol = solver.solve_mode(xi, &src)?;
    let u_at = solver.value_at(&sol, &src, t_n)?;

    let anti = im.antiderivative();
    let a_tn = anti.eval(t_n);
    let expo = |s: f64| a_tn - anti.eval(t_n - s) - m_n;
    let quad = simpson(|s| phi(t_n - s) * expo(s).exp(), s_n - eps, s_n + eps, QUAD_INTERVALS);
    // ψ(1/4) is the least value of the bump on the inner quarter of its support
    let lower = bump(0.25) * simpson(|s| expo(s).exp(), s_n - eps / 4.0, s_n + eps / 4.0, QUAD_INTERVALS);
    let curvature = im.eval_derivative(sigma, 1);
    let (ln_laplace, asymptotic) = if curvature > 0.0 {
        let width = curvature.powf(-0.5);
        (Some(phi(sigma).ln() + 0.5 * (TAU / curvature).ln()), width <= eps / 4.0)
    } else {
        (None, false)
    };

    let n_grid = solver_grid(solver);
    let gs = solver.g_at(&solver.field(xi)?, t_n).re;
    let field = solver.field(xi)?;
    let f: Vec<Scaled> = (0..n_grid)
        .map(|j| {
            let t = TAU * j as f64 / n_grid as f64;
            let a = src.amp(t);
            if a == Complex64::new(0.0, 0.0) {
                Scaled::ZERO
            } else {
                scale * Scaled::new(a * Complex64::from_polar(1.0, gs - solver.g_at(&field, t).re))
            }
        })
        .collect();
    let nm = norm(xi);
    let ln_sup_f = th.norm().ln() - m_n;
    let ln_u = u_at.ln_abs();
    let record = KitRecord {
        n,
        xi: xi.to_vec(),
        norm: nm,
        beta,
        t_n: prep.original_time(t_n),
        s_n,
        m_n,
        ln_theta: th.norm().ln(),
        ln_sup_f,
        ln_sup_u: sol.ln_sup().max(ln_u),
        ln_u_at: ln_u,
        ln_u_quad: quad.ln(),
        ln_lower: lower.ln(),
        ln_laplace,
        asymptotic,
        residual: sol.residual,
        decay_ok: ln_sup_f <= -(n as f64 / 2.0) * nm.ln(),
        lower_ok: ln_u >= lower.ln() + (1.0 - 1e-6f64).ln(),
    };
    Ok((record, KitMode { xi: xi.to_vec(), f, u: sol.values }))
}

fn solver_grid(solver: &ModeSolver) -> usize {
    solver.grid()
}

/// Sequence `ξ_n = k_n e₁` on a dyadic ladder that ends where `max ∫ Im M` reaches the
/// exponent budget, keeping nonresonant elements with `Im M₀ ≤ 0`, one sign of `β` and
/// `|β(ξ_n)| ≥ n log|ξ_n|`.
fn laplace_sequence(prep: &Prepared, beta_of: &dyn Fn(&[i64]) -> Result<f64>, dim: usize) -> Result<Vec<(Vec<i64>, f64)>> {
    let at = |k: u64| {
        let mut xi = vec![0i64; dim];
        xi[0] = k as i64;
        xi
    };
    let within = |k: u64| -> Result<bool> { Ok(prep.op.im_m(&at(k))?.max_segment_integral(MAXIMIZER_GRID).value <= EXPONENT_BUDGET) };
    if !within(1)? {
        return Ok(vec![]);
    }
    let mut lo = 1u64;
    while lo < KIT_XIMAX && within(2 * lo)? {
        lo *= 2;
    }
    let mut hi = 2 * lo;
    while hi - lo > 1 && lo < KIT_XIMAX {
        let mid = lo + (hi - lo) / 2;
        if within(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let admissible = |k: u64| -> Result<Option<f64>> {
        let xi = at(k);
        let m0 = prep.op.m0(&xi)?;
        if m0.im > 0.0 || is_resonant(m0, crate::config::RESONANCE_TOL) {
            return Ok(None);
        }
        Ok(Some(beta_of(&xi)?))
    };
    // walk down from the top, halving
    let mut ladder: Vec<(u64, f64)> = vec![];
    let mut k = lo;
    let mut sign = 0.0f64;
    while k >= 1 && ladder.len() < MAX_TERMS {
        let mut j = k;
        while j > k / 2 && j >= 1 {
            if let Some(beta) = admissible(j)? {
                if beta != 0.0 && (sign == 0.0 || beta.signum() == sign) {
                    sign = beta.signum();
                    ladder.push((j, beta));
                    break;
                }
            }
            j -= 1;
        }
        k /= 2;
    }
    ladder.reverse();
    let mut out: Vec<(Vec<i64>, f64)> = vec![];
    for (k, beta) in ladder {
        let n = out.len() + 1;
        if k >= n as u64 && beta.abs() >= n as f64 * (k as f64).ln() {
            out.push((at(k), beta));
        }
    }
    Ok(out)
}

fn single_term(op: &OperatorSpec, what: &str) -> Result<()> {
    if op.form != Form::Single || op.terms.len() != 1 {
        return Err(Error::HypothesesUnmet(format!("{what} needs a single-term operator")));
    }
    Ok(())
}

fn run_laplace(
    op: &OperatorSpec,
    recipe: Recipe,
    seq: Option<Vec<Vec<i64>>>,
    cfg: &RunConfig,
) -> Result<(CounterexampleKit, Prepared)> {
    let p = op.symbol().clone();
    let beta_of = move |xi: &[i64]| p.part(xi, Part::Im);
    let mut probe = vec![0i64; op.dim];
    probe[0] = cfg.ximax_solve as i64;
    if let Some(s) = &seq {
        if let Some(last) = s.last() {
            probe = last.clone();
        }
    }
    let mut prep = Prepared::new(op, &probe)?;
    let seq: Vec<(Vec<i64>, f64)> = match seq {
        Some(s) => s.into_iter().map(|xi| beta_of(&xi).map(|b| (xi, b))).collect::<Result<_>>()?,
        None => {
            let s = laplace_sequence(&prep, &beta_of, op.dim)?;
            // recentre on the largest element
            if let Some((last, _)) = s.last() {
                let again = Prepared::new(op, last)?;
                if again.reflected == prep.reflected {
                    prep = again;
                }
            }
            s
        }
    };
    if seq.len() < 3 {
        return Err(Error::HypothesesUnmet(format!("only {} admissible sequence elements", seq.len())));
    }
    let solver = ModeSolver::new(&prep.op, cfg.grid)?;
    let mut kit = CounterexampleKit::new(recipe, &op.name);
    kit.reflected = prep.reflected;
    kit.shift = prep.shift;
    for (i, (xi, beta)) in seq.iter().enumerate() {
        match laplace_mode(&prep, &solver, xi, i + 1, *beta) {
            Ok((r, m)) => {
                kit.records.push(r);
                kit.modes.push(m);
            }
            Err(e) => kit.diagnostics.push(format!("xi={xi:?}: {e}")),
        }
    }
    kit.finish(cfg.k_rapid);
    kit.fit_slope("beta", |r| r.beta.abs(), true);
    Ok((kit, prep))
}

/// Sign change of `a` with `α` at most logarithmic and `β` super-logarithmic.
pub fn sign_change_construct(op: &OperatorSpec, cfg: &RunConfig) -> Result<CounterexampleKit> {
    single_term(op, "sign change kit")?;
    let sign = op.a().sign_report(cfg.sign_tol * op.a().sup_norm().max(1.0));
    if !sign.changes_sign() {
        return Err(Error::HypothesesUnmet("a does not change sign".into()));
    }
    let p = op.symbol();
    let alpha = p.classify_growth(Part::Re, cfg.ximax_scan, cfg.shell_samples, cfg.seed);
    let beta = p.classify_growth(Part::Im, cfg.ximax_scan, cfg.shell_samples, cfg.seed);
    if !alpha.is_log() || !beta.is_super() {
        return Err(Error::HypothesesUnmet(format!("growth classes {:?} / {:?}", alpha.kind, beta.kind)));
    }
    let (mut kit, prep) = run_laplace(op, Recipe::SignChange, None, cfg)?;
    let last = kit.records.last().map(|r| r.beta.signum()).unwrap_or(1.0);
    let limit = prep.op.a().scaled(last);
    kit.limit = json!({ "m_a": limit.max_segment_integral(MAXIMIZER_GRID).value });
    Ok(kit)
}

/// Ratio accumulation `α/β → K` with `a + bK` changing sign.
pub fn ar1_construct(op: &OperatorSpec, k: f64, seq: Option<Vec<Vec<i64>>>, cfg: &RunConfig) -> Result<CounterexampleKit> {
    single_term(op, "ratio kit")?;
    let ak = PeriodicFn::lin_comb(1.0, op.a(), k, op.b());
    if !ak.sign_report(cfg.sign_tol * ak.sup_norm().max(1.0)).changes_sign() {
        return Err(Error::HypothesesUnmet(format!("a + {k}·b does not change sign")));
    }
    let p = op.symbol();
    if !p.classify_growth(Part::Im, cfg.ximax_scan, cfg.shell_samples, cfg.seed).is_super() {
        return Err(Error::HypothesesUnmet("β is not super-logarithmic".into()));
    }
    let (mut kit, prep) = run_laplace(op, Recipe::Ar1, seq, cfg)?;
    let last = kit.records.last().map(|r| r.beta.signum()).unwrap_or(1.0);
    let limit = PeriodicFn::lin_comb(last, prep.op.a(), last * k, prep.op.b());
    let m_ab = limit.max_segment_integral(MAXIMIZER_GRID).value;
    let ratios: Vec<Value> = kit
        .records
        .iter()
        .map(|r| {
            let alpha = p.part(&r.xi, Part::Re).unwrap_or(f64::NAN);
            json!({ "n": r.n, "ratio": alpha / r.beta, "m_n_normalized": r.m_n / r.beta.abs() })
        })
        .collect();
    kit.limit = json!({ "k": k, "m_ab": m_ab, "sequence": ratios });
    Ok(kit)
}

/// The operator `D_t + (a(t) + i)P(D_x)`, `a` the glued parabola, `p(ξ) = ξ + iξ²`.
pub fn vanishing_order_operator() -> OperatorSpec {
    let p = SymbolSpec::parse("xi1 + i*xi1*xi1", 1, &Default::default()).expect("fixed symbol parses");
    let mut op = OperatorSpec::single(glued_parabola(4096), PeriodicFn::exact_constant(Exact::int(1)), p);
    op.name = "vanishing_second".into();
    op
}

/// `∫_{−w}^{w} e^{−ξ²Cs²} ds` with `w = 1/(2√ξ)` by quadrature, and `√(π/C)/ξ`.
pub fn gaussian_comparison(xi: f64, c: f64) -> (f64, f64) {
    let w = 0.5 / xi.sqrt();
    let q = simpson(|s| (-(xi * xi) * c * s * s).exp(), -w, w, QUAD_INTERVALS);
    (q, (PI / c).sqrt() / xi)
}

/// Grid maximum of `∫_{t−s}^t Im M(r, ξ) dr`.
pub fn segment_maximum(op: &OperatorSpec, xi: &[i64], grid: usize) -> Result<f64> {
    Ok(op.im_m(xi)?.max_segment_integral(grid).value)
}

/// Source `ψ(√ξ(t − π + 1/√ξ))` gauged at `π + 1/√ξ`; `û` is read at that point.
pub fn vanishing_order_51(grid: usize, xis: &[i64], cfg: &RunConfig) -> Result<CounterexampleKit> {
    let op = vanishing_order_operator();
    let solver = ModeSolver::new(&op, grid)?;
    let a_sup = op.a().sup_norm();
    let mut kit = CounterexampleKit::new(Recipe::VanishingOrder51, &op.name);
    let mut cross = vec![];
    for (i, &k) in xis.iter().enumerate() {
        if k <= 0 {
            return Err(Error::BadInput("vanishing-order kit needs positive ξ".into()));
        }
        let xi = [k];
        let x = k as f64;
        let rt = x.sqrt();
        let m_xi = 4.0 * rt / 3.0;
        let m_grid = segment_maximum(&op, &xi, MAXIMIZER_GRID)?;
        cross.push(json!({ "xi": k, "m_formula": m_xi, "m_grid": m_grid }));
        let t_star = PI + 1.0 / rt;
        let m0 = op.m0(&xi)?;
        let th = theta(m0);
        let scale = Scaled::new(th) * Scaled::exp_of(Complex64::new(-m_xi, 0.0));
        let phi = move |t: f64| bump(rt * (t - PI + 1.0 / rt));
        let src = FnSource { f: move |t: f64| Complex64::new(phi(t), 0.0), scale, gauge: Some(t_star), feature: 1.0 / rt };
        let sol = solver.solve_mode(&xi, &src)?;
        let u_at = solver.value_at(&sol, &src, t_star)?;
        let im = op.im_m(&xi)?;
        let anti = im.antiderivative();
        let a_t = anti.eval(t_star);
        let quad = simpson(|s| phi(t_star - s) * (a_t - anti.eval(t_star - s) - m_xi).exp(), 1.0 / rt, 3.0 / rt, QUAD_INTERVALS);
        let (gauss, _) = gaussian_comparison(x, a_sup + 1.0);
        let curvature = im.eval_derivative(PI - 1.0 / rt, 1);
        let ln_sup_f = th.norm().ln() - m_xi;
        let ln_u = u_at.ln_abs();
        kit.records.push(KitRecord {
            n: i + 1,
            xi: xi.to_vec(),
            norm: x,
            beta: x * x,
            t_n: t_star,
            s_n: 2.0 / rt,
            m_n: m_xi,
            ln_theta: th.norm().ln(),
            ln_sup_f,
            ln_sup_u: sol.ln_sup().max(ln_u),
            ln_u_at: ln_u,
            ln_u_quad: quad.ln(),
            ln_lower: gauss.ln(),
            ln_laplace: (curvature > 0.0).then(|| 0.5 * (TAU / curvature).ln()),
            asymptotic: curvature > 0.0 && curvature.powf(-0.5) <= 0.25 / rt,
            residual: sol.residual,
            decay_ok: ln_sup_f <= -((i + 1) as f64 / 2.0) * x.ln(),
            lower_ok: ln_u >= gauss.ln() + (1.0 - 1e-6f64).ln(),
        });
        kit.modes.push(KitMode { xi: xi.to_vec(), f: vec![], u: sol.values });
    }
    kit.limit = json!({ "segment_maximum": cross });
    kit.finish(cfg.k_rapid);
    kit.slope_axis = "xi".into();
    let used: Vec<&KitRecord> = kit.records.iter().filter(|r| r.ln_u_at.is_finite()).collect();
    if used.len() >= 2 {
        let xs: Vec<f64> = used.iter().map(|r| r.norm.ln()).collect();
        let ys: Vec<f64> = used.iter().map(|r| r.ln_u_at).collect();
        kit.slope = Some(linear_fit(&xs, &ys).0);
    }
    Ok(kit)
}

/// Candidate with a certified upper bound on `ln|1 − e^{−2πiM₀(ξ)}|` and the signed offset of `M₀` from `Z`.
struct BadCandidate {
    xi: Vec<i64>,
    ln_theta: f64,
    offset: f64,
    exact: bool,
}

/// `M₀(ξ) = cξ` with `c` an exactly tagged constant.
fn exact_linear_multiplier(op: &OperatorSpec) -> Option<Exact> {
    if op.form != Form::Single || op.dim != 1 || !op.has_constant_coefficients() {
        return None;
    }
    let h = op.symbol().homogeneity.as_ref()?;
    let one = |v: &Option<(Exact, Exact)>, s: i64| {
        v.as_ref().is_some_and(|(re, im)| re.as_rational() == Some(BigRational::from_integer(s.into())) && im.is_zero() == Some(true))
    };
    if h.degree.as_rational() != Some(BigRational::from_integer(1.into())) || !one(&h.p_plus, 1) || !one(&h.p_minus, -1) {
        return None;
    }
    let b0 = op.b().exact_mean()?;
    if b0.is_zero() != Some(true) {
        return None;
    }
    let a0 = op.a().exact_mean()?.clone();
    (a0.class() != ArithClass::Unknown).then_some(a0)
}

fn bad_candidates(op: &OperatorSpec, cfg: &RunConfig) -> Result<Vec<BadCandidate>> {
    if let Some(c) = exact_linear_multiplier(op) {
        let (lo, hi) = c.interval(cfg.precision_bits);
        let cf = certified_prefix(&lo, &hi, 200);
        let mut out = vec![];
        let limit = BigInt::from(i64::MAX / 4);
        for (_, q) in &cf.convergents {
            if q <= &BigInt::zero() || q > &limit {
                continue;
            }
            let qr = BigRational::from_integer(q.clone());
            let (x0, x1) = (&lo * &qr, &hi * &qr);
            let near = (&x0 + BigRational::new(1.into(), 2.into())).floor();
            let d0 = &x0 - &near;
            let d1 = &x1 - &near;
            let dmax = if d0.abs() > d1.abs() { d0.abs() } else { d1.abs() };
            let dist = ratio_f64(&dmax);
            let mid = ratio_f64(&((d0 + d1) / BigRational::from_integer(2.into())));
            out.push(BadCandidate {
                xi: vec![q.to_i64().expect("bounded convergent")],
                ln_theta: (2.0 * (PI * dist).sin().abs().max(f64::MIN_POSITIVE)).ln(),
                offset: mid,
                exact: true,
            });
        }
        return Ok(out);
    }
    let mut out = vec![];
    for xi in lattice_points(op.dim, cfg.ximax_scan, cfg.shell_samples, cfg.seed) {
        let m0 = op.m0(&xi)?;
        let th = theta(m0);
        // f64 evaluation of the phase is trusted only well above its rounding error
        if th.norm() > 1e3 * f64::EPSILON * (1.0 + m0.norm()) {
            out.push(BadCandidate { xi, ln_theta: th.norm().ln(), offset: m0.re - m0.re.round(), exact: false });
        }
    }
    Ok(out)
}

/// Interval-supported source away from the limit of the maximizers of `∫_0^t Im M`.
pub fn ncm2_construct(op: &OperatorSpec, cfg: &RunConfig) -> Result<CounterexampleKit> {
    let mut cands = bad_candidates(op, cfg)?;
    cands.sort_by(|a, b| norm(&a.xi).partial_cmp(&norm(&b.xi)).unwrap());
    let mut seq: Vec<BadCandidate> = vec![];
    for c in cands {
        let n = seq.len() + 1;
        if n > MAX_TERMS {
            break;
        }
        let nm = norm(&c.xi);
        let prev = seq.last().map(|s| norm(&s.xi)).unwrap_or(0.0);
        if nm > prev && nm > n as f64 && c.ln_theta < -(n as f64) * nm.ln() {
            seq.push(c);
        }
    }
    if seq.len() < 2 {
        return Err(Error::NoBadSequence(cfg.ximax_scan));
    }
    let solver = ModeSolver::new(op, cfg.grid)?;
    let mut kit = CounterexampleKit::new(Recipe::Ncm2, &op.name);
    kit.slope_axis = "xi".into();
    // maximizers of ∫_0^t Im M, and an interval away from their limit
    let tmax = |xi: &[i64]| -> Result<f64> {
        let anti = op.im_m(xi)?.antiderivative();
        let n = MAXIMIZER_GRID;
        let j = (0..n).max_by(|&i, &k| anti.eval(TAU * i as f64 / n as f64).total_cmp(&anti.eval(TAU * k as f64 / n as f64))).unwrap_or(0);
        Ok(TAU * j as f64 / n as f64)
    };
    let t0 = tmax(&seq.last().expect("two elements").xi)?;
    let circ = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(TAU);
        d.min(TAU - d)
    };
    let centre = if circ(t0, PI / 2.0) >= circ(t0, 1.5 * PI) { PI / 2.0 } else { 1.5 * PI };
    let half = PI / 4.0;
    let phi = move |t: f64| bump((t - centre) / half);
    let mass = simpson(phi, centre - half, centre + half, QUAD_INTERVALS);
    kit.limit = json!({ "t0": t0, "interval": [centre - half, centre + half], "mass": mass });
    for (i, c) in seq.iter().enumerate() {
        let n = i + 1;
        let t_n = tmax(&c.xi)?;
        if (t_n - centre).abs() <= half {
            kit.diagnostics.push(format!("xi={:?}: maximizer inside the source interval", c.xi));
            continue;
        }
        let m0 = op.m0(&c.xi)?;
        let nm = norm(&c.xi);
        let before = t_n < centre - half;
        let expected = if before { (TAU * m0.im).exp() * mass } else { mass };
        let (ln_u, residual, u_grid) = if c.exact {
            // constant coefficients: û = e^{−iM₀(t−t_n)}(ΘΦ(t) + (1−Θ)Φ(2π)), Θ from the certified offset
            let th = theta(Complex64::new(c.offset, 0.0));
            let big_phi = |t: f64| if t <= centre - half { 0.0 } else { simpson(phi, centre - half, t.min(centre + half), 2048) };
            let w = |t: f64| th * big_phi(t) + (1.0 - th) * mass;
            // plug back on the envelope: w' = Θφ, i.e. Φ' = φ once the constant is dropped
            let mut worst = 0.0f64;
            let h = 1e-3;
            for j in 1..64 {
                let t = TAU * j as f64 / 64.0;
                let d = (big_phi(t - 2.0 * h) - 8.0 * big_phi(t - h) + 8.0 * big_phi(t + h) - big_phi(t + 2.0 * h)) / (12.0 * h);
                worst = worst.max((d - phi(t)).abs());
            }
            let grid: Vec<Scaled> = (0..cfg.grid).map(|j| Scaled::new(w(TAU * j as f64 / cfg.grid as f64))).collect();
            (w(t_n).norm().ln(), worst, grid)
        } else {
            let field = solver.field(&c.xi)?;
            let anti = op.im_m(&c.xi)?.antiderivative();
            let a_tn = anti.eval(t_n);
            let amp = move |t: f64| Complex64::new(phi(t) * (anti.eval(t) - a_tn).exp(), 0.0);
            let src = FnSource { f: amp, scale: Scaled::new(theta(field.m0)), gauge: Some(t_n), feature: half };
            let sol = solver.solve_mode(&c.xi, &src)?;
            let u = solver.value_at(&sol, &src, t_n)?;
            (u.ln_abs(), sol.residual, sol.values)
        };
        let ln_sup_u = ln_sup(&u_grid).max(ln_u);
        kit.records.push(KitRecord {
            n,
            xi: c.xi.clone(),
            norm: nm,
            beta: m0.im,
            t_n,
            s_n: 0.0,
            m_n: 0.0,
            ln_theta: c.ln_theta,
            ln_sup_f: c.ln_theta,
            ln_sup_u,
            ln_u_at: ln_u,
            ln_u_quad: expected.ln(),
            ln_lower: (0.5 * mass).ln(),
            ln_laplace: None,
            asymptotic: true,
            residual,
            decay_ok: c.ln_theta <= -(n as f64) * nm.ln(),
            lower_ok: ln_u >= (0.5 * mass).ln(),
        });
        kit.modes.push(KitMode { xi: c.xi.clone(), f: vec![], u: u_grid });
    }
    kit.finish(cfg.k_rapid);
    Ok(kit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(text: &str) -> OperatorSpec {
        OperatorSpec::from_json_str(text).unwrap()
    }

    fn cfg() -> RunConfig {
        RunConfig { ximax_scan: 4096, shell_samples: 256, ..RunConfig::default() }
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let v = simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 4);
        assert!((v - 0.0).abs() < 1e-14);
        let (q, g) = gaussian_comparison(1024.0, 8.0);
        assert!((q / g - 1.0).abs() < 0.05);
    }

    #[test]
    fn resonant_null_half() {
        let o = op(r#"{"a":0.5,"b":0,"symbol":"xi1*xi1"}"#);
        let kit = resonant_null(&o, 4, &cfg()).unwrap();
        let xs: Vec<i64> = kit.records.iter().map(|r| r.xi[0].abs()).collect();
        assert!(xs.iter().all(|x| x % 2 == 0), "{xs:?}");
        for r in &kit.records {
            assert!(r.residual <= 1e-8, "{r:?}");
            assert!(r.lower_ok);
        }
        assert!(kit.f_rapid && !kit.u_rapid);
        let none = op(r#"{"a":{"quadirr":{"d":2,"a":[0,1],"b":[1,1]}},"b":0,"symbol":"xi1"}"#);
        assert!(matches!(resonant_null(&none, 2, &cfg()), Err(Error::NotEnoughResonances { .. })));
    }

    #[test]
    fn reflection_flips_mean_sign() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[1,0.5],"sin":[0.25]}},"b":{"trigpoly":{"cos":[0.5],"sin":[1]}},"symbol":"xi1 + i*absxi"}"#);
        let r = o.reflect();
        for t in [0.3, 1.7, 4.0] {
            assert!((r.a().eval(t) + o.a().eval(-t)).abs() < 1e-14);
            assert!((r.b().eval(t) + o.b().eval(-t)).abs() < 1e-14);
        }
        let m = o.m0(&[3]).unwrap();
        assert!((r.m0(&[3]).unwrap() + m).norm() < 1e-12);
    }

    #[test]
    fn ratio_kit_lower_bounds() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[0.5,0,0.5]}},"b":{"trigpoly":{"cos":[-0.5,0,0.5]}},"symbol":"sqrt(absxi) + i*sqrt(absxi + 1)"}"#);
        let kit = ar1_construct(&o, 1.0, None, &cfg()).unwrap();
        assert!(kit.reflected);
        assert!(kit.records.len() >= 6, "{:?}", kit.diagnostics);
        for r in &kit.records {
            assert!(r.lower_ok && r.decay_ok, "{r:?}");
            assert!((r.ln_u_at - r.ln_u_quad).abs() < 1e-6, "{r:?}");
            assert!(r.residual <= 1e-6, "{r:?}");
        }
        let s = kit.slope.unwrap();
        assert!((s + 0.5).abs() <= 0.25, "slope {s}");
        assert!(kit.f_rapid && !kit.u_rapid);
        let m_ab = kit.limit["m_ab"].as_f64().unwrap();
        for r in kit.records.iter().filter(|r| r.n >= 8) {
            assert!((r.m_n / r.beta.abs() - m_ab).abs() <= 0.05, "{r:?} vs {m_ab}");
        }
    }

    fn shipped(name: &str) -> OperatorSpec {
        let path = format!("{}/operators/{name}.json", env!("CARGO_MANIFEST_DIR"));
        OperatorSpec::from_json_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn sign_change_kit_on_flipped_plateau() {
        let kit = sign_change_construct(&shipped("exampsign1_flipped"), &cfg()).unwrap();
        assert!(kit.records.len() >= 3, "{:?}", kit.diagnostics);
        for r in &kit.records {
            assert!(r.lower_ok && r.decay_ok && r.residual <= 1e-6, "{r:?}");
            assert!((r.ln_u_at - r.ln_u_quad).abs() < 1e-6, "{r:?}");
        }
        let s = kit.slope.unwrap();
        assert!((s + 0.5).abs() <= 0.25, "slope {s}");
        assert!(kit.f_rapid && !kit.u_rapid);
        assert!(kit.limit["m_a"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn vanishing_order_kit_decays_polynomially() {
        let xis = [64, 128, 256, 512, 1024, 2048, 4096];
        let kit = vanishing_order_51(1024, &xis, &cfg()).unwrap();
        for (r, c) in kit.records.iter().zip(kit.limit["segment_maximum"].as_array().unwrap()) {
            assert!(r.lower_ok && r.decay_ok && r.residual <= 1e-6, "{r:?}");
            assert!((r.ln_u_at - r.ln_u_quad).abs() < 1e-6, "{r:?}");
            let (m, g) = (c["m_formula"].as_f64().unwrap(), c["m_grid"].as_f64().unwrap());
            assert!((m - g).abs() <= 1e-6 * m, "{c}");
        }
        let s = kit.slope.unwrap();
        assert!(s >= -1.2 && s <= -0.5, "slope {s}");
        assert!(kit.f_rapid && !kit.u_rapid);
    }

    #[test]
    fn liouville_kit_and_diophantine_refusal() {
        let kit = ncm2_construct(&shipped("liouville_linear"), &RunConfig::default()).unwrap();
        assert!(kit.records.len() >= 2, "{:?}", kit.diagnostics);
        for r in &kit.records {
            assert!(r.lower_ok && r.decay_ok && r.residual <= 1e-6, "{r:?}");
        }
        assert!(!kit.u_rapid);
        assert!(matches!(ncm2_construct(&shipped("sqrt2_half"), &RunConfig::default()), Err(Error::NoBadSequence(_))));
    }
}
