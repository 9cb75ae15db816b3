//! Periodic solutions of the mode equation `∂_t û + iM(t,ξ)û = f̂` on `T¹`.
//!
//! The two integral representations of the periodic solution are evaluated as
//! one-step recursions on a fine grid: the forward form propagates with
//! `e^{-i(G(t_{k+1})-G(t_k))}`, the backward form with its inverse, and the
//! periodicity condition is closed with `1/(1-e^{∓2πiM₀})`. Each panel
//! integral is exponentially fitted (exact for a linear exponent), so the step
//! only has to resolve the variation of `M`, never `M` itself. All values are
//! [`Scaled`], so exponents in the thousands are harmless.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex};

use crate::config::{RunConfig, EXPONENT_BUDGET, ORACLE_EXPONENT_BUDGET, RESONANCE_TOL};
use crate::const_coeff::{is_resonant, lattice_points};
use crate::error::{Error, Result};
use crate::operator::{Form, OperatorSpec};
use crate::periodic::{Antiderivative, PeriodicFn, SignKind};
use crate::scaled::Scaled;
use crate::symbol::{linear_fit, parse_expr, shells_up_to, Expr, Part};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
/// Panel width `H` is chosen with `|E''|·H² ≤ RESOLUTION`.
const RESOLUTION: f64 = 1.0;
/// Tighter bound once the inner exponent exceeds `FINE_EXPONENT`.
const RESOLUTION_FINE: f64 = 0.25;
const FINE_EXPONENT: f64 = 100.0;
const MAX_PANELS: usize = 1 << 18;
/// Inner exponent up to which propagated grid values are trusted.
const STABLE_EXPONENT: f64 = 2.0;
/// Largest `T·P` for per-point closed loops.
const LOOP_BUDGET: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    Solu1,
    Solu2,
    FourierDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// Spectral derivative of `û` on the output grid, plugged back into the equation.
    Spectral,
    /// `û` is not resolved on the output grid; difference against a solve on a grid twice as fine.
    Refinement,
    NotComputed,
}

/// A right-hand side `f̂(·,ξ)` for one mode.
pub trait ModeSource: Sync {
    /// Overall factor.
    fn scale(&self) -> Scaled {
        Scaled::new(Complex64::new(1.0, 0.0))
    }

    /// With `Some(t*)` the source is `scale·amp(t)·exp(i Re∫_t^{t*} M)` on `[0, 2π]`;
    /// `amp` must then vanish near `t = 0`.
    fn gauge(&self) -> Option<f64> {
        None
    }

    fn amp(&self, t: f64) -> Complex64;

    /// `amp` on `t_j = 2πj/n`, `j = 0..=n`.
    fn amp_grid(&self, n: usize) -> Vec<Complex64> {
        (0..=n).map(|j| self.amp(TAU * j as f64 / n as f64)).collect()
    }

    /// Smallest length scale on which `amp` varies.
    fn feature(&self) -> f64 {
        TAU
    }
}

/// `Σ c_k e^{ikt}` times a scale.
#[derive(Debug, Clone)]
pub struct TrigSource {
    pub harmonics: Vec<(i64, Complex64)>,
    pub scale: Scaled,
}

impl TrigSource {
    pub fn new(harmonics: Vec<(i64, Complex64)>) -> Self {
        TrigSource { harmonics, scale: Scaled::new(Complex64::new(1.0, 0.0)) }
    }
}

impl ModeSource for TrigSource {
    fn scale(&self) -> Scaled {
        self.scale
    }

    fn amp(&self, t: f64) -> Complex64 {
        self.harmonics.iter().map(|(k, c)| c * Complex64::from_polar(1.0, *k as f64 * t)).sum()
    }

    fn feature(&self) -> f64 {
        let k = self.harmonics.iter().map(|h| h.0.unsigned_abs()).max().unwrap_or(0).max(1);
        TAU / k as f64
    }
}

/// Samples on `2πj/T`, band-limited interpolation in between.
#[derive(Debug, Clone)]
pub struct GridSource {
    coeffs: Vec<Complex64>,
    values: Vec<Complex64>,
    pub scale: Scaled,
}

impl GridSource {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        let n = values.len();
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::BadInput("grid source length must be a power of two".into()));
        }
        let mut c = values.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut c);
        c.iter_mut().for_each(|v| *v /= n as f64);
        Ok(GridSource { coeffs: c, values, scale: Scaled::new(Complex64::new(1.0, 0.0)) })
    }

    pub fn scaled(mut self, s: Scaled) -> Self {
        self.scale = s;
        self
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn freq(&self, j: usize) -> f64 {
        let n = self.coeffs.len();
        if j < n / 2 {
            j as f64
        } else if j > n / 2 {
            j as f64 - n as f64
        } else {
            0.0
        }
    }
}

impl ModeSource for GridSource {
    fn scale(&self) -> Scaled {
        self.scale
    }

    fn amp(&self, t: f64) -> Complex64 {
        let n = self.coeffs.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, c) in self.coeffs.iter().enumerate() {
            if j == n / 2 {
                acc += c * (t * n as f64 / 2.0).cos();
            } else {
                acc += c * Complex64::from_polar(1.0, self.freq(j) * t);
            }
        }
        acc
    }

    fn amp_grid(&self, m: usize) -> Vec<Complex64> {
        let n = self.coeffs.len();
        let mut out = if m == n {
            self.values.clone()
        } else if m % n == 0 {
            let mut spec = vec![Complex64::new(0.0, 0.0); m];
            for (j, c) in self.coeffs.iter().enumerate() {
                if j < n / 2 {
                    spec[j] += c;
                } else if j > n / 2 {
                    spec[m - (n - j)] += c;
                } else {
                    spec[n / 2] += c * 0.5;
                    spec[m - n / 2] += c * 0.5;
                }
            }
            FftPlanner::new().plan_fft_inverse(m).process(&mut spec);
            spec
        } else {
            (0..m).map(|j| self.amp(TAU * j as f64 / m as f64)).collect()
        };
        out.push(out[0]);
        out
    }

    fn feature(&self) -> f64 {
        TAU / self.coeffs.len() as f64 * 4.0
    }
}

/// Arbitrary amplitude function.
pub struct FnSource<F: Fn(f64) -> Complex64 + Sync> {
    pub f: F,
    pub scale: Scaled,
    pub gauge: Option<f64>,
    pub feature: f64,
}

impl<F: Fn(f64) -> Complex64 + Sync> ModeSource for FnSource<F> {
    fn scale(&self) -> Scaled {
        self.scale
    }

    fn gauge(&self) -> Option<f64> {
        self.gauge
    }

    fn amp(&self, t: f64) -> Complex64 {
        (self.f)(t)
    }

    fn feature(&self) -> f64 {
        self.feature
    }
}

/// `f̂(t,ξ) = exp(log_amp(ξ))·g(t)` for a real profile `g`.
#[derive(Debug, Clone)]
pub struct Separable {
    pub log_amp: Option<Expr>,
    pub profile: PeriodicFn,
}

impl Separable {
    pub fn zero() -> Self {
        Separable { log_amp: None, profile: PeriodicFn::zero() }
    }

    pub fn from_json(v: &Value, dim: usize) -> Result<Self> {
        if v.get("zero").and_then(Value::as_bool) == Some(true) {
            return Ok(Separable::zero());
        }
        let constants = BTreeMap::new();
        let log_amp = match (v.get("log_amplitude"), v.get("amplitude")) {
            (Some(Value::String(s)), _) => parse_expr(s, dim, &constants)?,
            (None, Some(Value::String(s))) => {
                Expr::Log1p(Box::new(Expr::Sub(Box::new(parse_expr(s, dim, &constants)?), Box::new(Expr::Num(1.0)))))
            }
            _ => return Err(Error::BadInput("source needs \"log_amplitude\" or \"amplitude\"".into())),
        };
        let profile = crate::operator::coefficient(v.get("profile"), "profile")?;
        Ok(Separable { log_amp: Some(log_amp), profile })
    }

    pub fn mode(&self, xi: &[i64]) -> Result<GridOrZero> {
        let Some(la) = &self.log_amp else { return Ok(GridOrZero::Zero) };
        let l = la.eval(xi)?;
        Ok(GridOrZero::Profile { profile: self.profile.clone(), scale: Scaled::exp_of(l) })
    }
}

#[derive(Debug, Clone)]
pub enum GridOrZero {
    Zero,
    Profile { profile: PeriodicFn, scale: Scaled },
}

impl ModeSource for GridOrZero {
    fn scale(&self) -> Scaled {
        match self {
            GridOrZero::Zero => Scaled::ZERO,
            GridOrZero::Profile { scale, .. } => *scale,
        }
    }

    fn amp(&self, t: f64) -> Complex64 {
        match self {
            GridOrZero::Zero => Complex64::new(0.0, 0.0),
            GridOrZero::Profile { profile, .. } => Complex64::new(profile.eval(t), 0.0),
        }
    }

    fn amp_grid(&self, n: usize) -> Vec<Complex64> {
        match self {
            GridOrZero::Zero => vec![Complex64::new(0.0, 0.0); n + 1],
            GridOrZero::Profile { profile, .. } => {
                let mut v: Vec<Complex64> = profile.eval_grid(n).into_iter().map(|x| Complex64::new(x, 0.0)).collect();
                v.push(v[0]);
                v
            }
        }
    }

    fn feature(&self) -> f64 {
        match self {
            GridOrZero::Zero => TAU,
            GridOrZero::Profile { profile, .. } => TAU / (profile.degree().max(1) as f64) * 2.0,
        }
    }
}

/// Coefficient antiderivatives of every term on `2πj/n`, `j = 0..=n`.
struct Tables {
    big_a: Vec<Vec<f64>>,
    big_b: Vec<Vec<f64>>,
}

/// Per-operator solver state: antiderivatives, derivative bounds and grid tables.
pub struct ModeSolver<'a> {
    pub op: &'a OperatorSpec,
    pub grid: usize,
    anti: Vec<(Antiderivative, Antiderivative)>,
    deriv_sup: Vec<(f64, f64)>,
    coarse: Vec<(Vec<f64>, Vec<f64>)>,
    cache: Mutex<HashMap<usize, Arc<Tables>>>,
}

/// `M(·,ξ)` and its antiderivative `G` for one mode.
pub struct ModeField {
    pub xi: Vec<i64>,
    pub symbols: Vec<Complex64>,
    pub m0: Complex64,
    /// Sign of `t ↦ Im M(t,ξ)` on the output grid.
    pub im_sign: SignKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSolution {
    pub xi: Vec<i64>,
    /// `û(2πj/T)`
    #[serde(skip)]
    pub values: Vec<Scaled>,
    pub formula: Formula,
    pub max_exponent: f64,
    pub residual: f64,
    pub residual_kind: ResidualKind,
    /// Fine panels per output interval.
    pub refinement: usize,
    /// `û` at every panel endpoint.
    #[serde(skip)]
    pub dense: Vec<Scaled>,
    /// Per-panel propagator and increment of the recursion.
    #[serde(skip)]
    pub steps: Vec<(Scaled, Scaled)>,
    #[serde(skip)]
    pub closure: Scaled,
    pub diagnostics: Vec<String>,
}

impl ModeSolution {
    pub fn to_complex(&self) -> Vec<Complex64> {
        self.values.iter().map(|v| v.to_complex()).collect()
    }

    /// `ln sup_t |û|` over the panel endpoints.
    pub fn ln_sup(&self) -> f64 {
        let src = if self.dense.is_empty() { &self.values } else { &self.dense };
        src.iter().map(|v| v.ln_abs()).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn rem_panel(t: f64, h: f64, p: usize) -> (usize, f64) {
    let k = ((t / h).floor() as i64).clamp(0, p as i64 - 1) as usize;
    (k, t - k as f64 * h)
}

/// `g_j(z) = ∫_0^1 e^{zy} y^j dy` for `j = 0..=4`.
pub fn exp_moments(z: Complex64) -> [Complex64; 5] {
    let ez = z.exp();
    let mut g = [Complex64::new(0.0, 0.0); 5];
    if z.norm() < 4.0 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..60 {
            let add = term / (m as f64 + 5.0);
            acc += add;
            if add.norm() < 1e-18 * acc.norm() && m > 4 {
                break;
            }
            term *= z / (m as f64 + 1.0);
        }
        g[4] = acc;
        for j in (1..5).rev() {
            g[j - 1] = (ez - z * g[j]) / j as f64;
        }
    } else {
        g[0] = (ez - 1.0) / z;
        for j in 1..5 {
            g[j] = (ez - j as f64 * g[j - 1]) / z;
        }
    }
    g
}

/// Monomial coefficients of the quartic through `(j/4, q_j)`.
fn quartic_coeffs(q: &[Complex64; 5]) -> [Complex64; 5] {
    // inverse Vandermonde for nodes 0, 1/4, 1/2, 3/4, 1
    const V: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [-25.0 / 3.0, 16.0, -12.0, 16.0 / 3.0, -1.0],
        [70.0 / 3.0, -208.0 / 3.0, 76.0, -112.0 / 3.0, 22.0 / 3.0],
        [-80.0 / 3.0, 96.0, -128.0, 224.0 / 3.0, -16.0],
        [32.0 / 3.0, -128.0 / 3.0, 64.0, -128.0 / 3.0, 32.0 / 3.0],
    ];
    let mut d = [Complex64::new(0.0, 0.0); 5];
    for (j, row) in V.iter().enumerate() {
        for i in 0..5 {
            d[j] += row[i] * q[i];
        }
    }
    d
}

/// `∫_0^1 e^{E(y)} f(y) dy` from five equispaced samples `E_i = E(i/4)`, `f_i`.
pub fn panel_integral(e: &[Complex64; 5], f: &[Complex64; 5]) -> Scaled {
    if f.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
        return Scaled::ZERO;
    }
    let forward = e[0].re >= e[4].re;
    let (ea, eb) = if forward { (e[0], e[4]) } else { (e[4], e[0]) };
    let z = eb - ea;
    let mut q = [Complex64::new(0.0, 0.0); 5];
    for i in 0..5 {
        let src = if forward { i } else { 4 - i };
        let y = i as f64 / 4.0;
        let rho = e[src] - ea - z * y;
        q[i] = if i == 0 || i == 4 { f[src] } else { rho.exp() * f[src] };
    }
    let d = quartic_coeffs(&q);
    let g = exp_moments(z);
    let s: Complex64 = (0..5).map(|j| d[j] * g[j]).sum();
    Scaled::exp_of(ea) * Scaled::new(s)
}

/// One full period of the recursion ending (Solu-1) or starting (Solu-2) at panel endpoint `j`, from zero.
fn loop_value(steps: &[(Scaled, Scaled)], j: usize, formula: Formula) -> Scaled {
    let p = steps.len();
    let mut w = Scaled::ZERO;
    if formula == Formula::Solu1 {
        for i in 0..p {
            let (prop, inc) = steps[(j + i) % p];
            w = prop * w + inc;
        }
    } else {
        for i in (0..p).rev() {
            let (prop, inc) = steps[(j + i) % p];
            w = prop * w + inc;
        }
    }
    w
}

/// `1/(1 - e^x)` without overflow.
fn inv_one_minus_exp(x: Complex64) -> Scaled {
    if x.re <= 0.0 {
        Scaled::new(Complex64::new(1.0, 0.0) / (1.0 - x.exp()))
    } else {
        Scaled::exp_of(-x) * Scaled::new(Complex64::new(-1.0, 0.0) / (1.0 - (-x).exp()))
    }
}

/// `max_{j, j-P ≤ i ≤ j} v_j - v_i` for `v` on `0..=P` extended by `v_{i-P} = v_i - (v_P - v_0)`.
fn max_window_gain(v: &[f64]) -> f64 {
    let p = v.len() - 1;
    let shift = v[p] - v[0];
    let at = |i: i64| if i < 0 { v[(i + p as i64) as usize] - shift } else { v[i as usize] };
    let mut window: std::collections::VecDeque<i64> = std::collections::VecDeque::new();
    let mut best = 0.0f64;
    for i in -(p as i64)..=p as i64 {
        while window.back().is_some_and(|&b| at(b) >= at(i)) {
            window.pop_back();
        }
        window.push_back(i);
        if i < 0 {
            continue;
        }
        while window.front().is_some_and(|&f| f < i - p as i64) {
            window.pop_front();
        }
        best = best.max(at(i) - at(*window.front().unwrap()));
    }
    best
}

impl<'a> ModeSolver<'a> {
    pub fn new(op: &'a OperatorSpec, grid: usize) -> Result<Self> {
        if grid < 8 || !grid.is_power_of_two() {
            return Err(Error::BadInput(format!("grid {grid} must be a power of two ≥ 8")));
        }
        let anti = op.terms.iter().map(|t| (t.a.antiderivative(), t.b.antiderivative())).collect();
        let deriv_sup = op.terms.iter().map(|t| (t.a.derivative().sup_norm(), t.b.derivative().sup_norm())).collect();
        let coarse = op.terms.iter().map(|t| (t.a.eval_grid(grid), t.b.eval_grid(grid))).collect();
        Ok(ModeSolver { op, grid, anti, deriv_sup, coarse, cache: Mutex::new(HashMap::new()) })
    }

    fn tables(&self, n: usize) -> Arc<Tables> {
        if let Some(t) = self.cache.lock().unwrap().get(&n) {
            return t.clone();
        }
        let ext = |a: &Antiderivative| a.eval_extended_grid(n, 0, n as i64 + 1);
        let big_a = self.anti.iter().map(|(a, _)| ext(a)).collect();
        let big_b = self.anti.iter().map(|(_, b)| ext(b)).collect();
        let t = Arc::new(Tables { big_a, big_b });
        self.cache.lock().unwrap().insert(n, t.clone());
        t
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn field(&self, xi: &[i64]) -> Result<ModeField> {
        let symbols = self.op.term_symbols(xi)?;
        let m0 = self.op.m0(xi)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..self.grid {
            let mut v = 0.0;
            for (k, p) in symbols.iter().enumerate() {
                v += self.coarse[k].0[j] * p.im + self.coarse[k].1[j] * p.re;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let tol = crate::config::SIGN_TOL * (1.0 + hi.abs().max(lo.abs()));
        let im_sign = if hi <= tol && lo >= -tol {
            SignKind::IdenticallyZero
        } else if lo >= -tol {
            SignKind::NonNegative
        } else if hi <= tol {
            SignKind::NonPositive
        } else {
            SignKind::ChangesSign
        };
        Ok(ModeField { xi: xi.to_vec(), symbols, m0, im_sign })
    }

    /// `G(t) = Σ (A_j + iB_j)(t) p_j` at an arbitrary time.
    pub fn g_at(&self, field: &ModeField, t: f64) -> Complex64 {
        self.anti.iter().zip(&field.symbols).map(|((a, b), p)| Complex64::new(a.eval(t), b.eval(t)) * p).sum()
    }

    fn m_at(&self, field: &ModeField, t: f64) -> Complex64 {
        self.op.terms.iter().zip(&field.symbols).map(|(term, p)| Complex64::new(term.a.eval(t), term.b.eval(t)) * p).sum()
    }

    /// Panels per output interval: smallest power of two resolving the variation of `M`.
    fn refinement(&self, field: &ModeField, src: &dyn ModeSource) -> usize {
        let rate: f64 = self
            .deriv_sup
            .iter()
            .zip(&field.symbols)
            .map(|((da, db), p)| if src.gauge().is_some() { da * p.im.abs() + db * p.re.abs() } else { (da + db) * p.norm() })
            .sum();
        let res = if self.coarse_exponent(field) > FINE_EXPONENT { RESOLUTION_FINE } else { RESOLUTION };
        let mut r = 1usize;
        loop {
            let h = TAU / (self.grid * r) as f64;
            if (rate * h * h <= res && h <= src.feature() / 16.0) || self.grid * r >= MAX_PANELS {
                return r;
            }
            r *= 2;
        }
    }

    /// Smaller of the two inner exponents on the output grid.
    fn coarse_exponent(&self, field: &ModeField) -> f64 {
        let tab = self.tables(4 * self.grid);
        let im_g: Vec<f64> = (0..=self.grid)
            .map(|k| field.symbols.iter().enumerate().map(|(j, p)| tab.big_a[j][4 * k] * p.im + tab.big_b[j][4 * k] * p.re).sum())
            .collect();
        let neg: Vec<f64> = im_g.iter().map(|v| -v).collect();
        max_window_gain(&im_g).min(max_window_gain(&neg))
    }

    fn constant_coefficients(&self) -> bool {
        self.op.has_constant_coefficients()
    }

    /// Pick the formula with the smaller largest inner exponent.
    pub fn choose(&self, field: &ModeField, im_g: &[f64]) -> (Formula, f64, f64) {
        let e1 = max_window_gain(im_g);
        let neg: Vec<f64> = im_g.iter().map(|v| -v).collect();
        let e2 = max_window_gain(&neg);
        let f = match field.im_sign {
            SignKind::NonPositive => Formula::Solu1,
            SignKind::NonNegative => Formula::Solu2,
            SignKind::IdenticallyZero => Formula::Solu1,
            SignKind::ChangesSign => {
                if e1 <= e2 {
                    Formula::Solu1
                } else {
                    Formula::Solu2
                }
            }
        };
        (f, e1, e2)
    }

    pub fn solve_mode(&self, xi: &[i64], src: &dyn ModeSource) -> Result<ModeSolution> {
        self.solve_mode_with(xi, src, None)
    }

    /// As [`Self::solve_mode`] with the formula forced; constant coefficients default to the Fourier diagonal.
    pub fn solve_mode_with(&self, xi: &[i64], src: &dyn ModeSource, force: Option<Formula>) -> Result<ModeSolution> {
        let field = self.field(xi)?;
        if is_resonant(field.m0, RESONANCE_TOL) {
            let d = (field.m0.re - field.m0.re.round()).hypot(field.m0.im);
            return Err(Error::ResonantMode { xi: xi.to_vec(), dist: d });
        }
        let want_diag = force == Some(Formula::FourierDiagonal) || (force.is_none() && self.constant_coefficients() && src.gauge().is_none());
        let r = if want_diag { 1 } else { self.refinement(&field, src) };
        let mut sol = if want_diag { self.diagonal(&field, src)? } else { self.recursion(&field, src, r, force, 1)? };
        self.attach_residual(&field, src, &mut sol, true)?;
        Ok(sol)
    }

    fn diagonal(&self, field: &ModeField, src: &dyn ModeSource) -> Result<ModeSolution> {
        if !self.constant_coefficients() {
            return Err(Error::BadInput("Fourier diagonal needs constant coefficients".into()));
        }
        let n = self.grid;
        let mut f = self.source_on_grid(field, src, n);
        let scale = src.scale();
        FftPlanner::new().plan_fft_forward(n).process(&mut f);
        for (j, v) in f.iter_mut().enumerate() {
            let tau = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            *v /= I * (tau + field.m0) * n as f64;
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut f);
        let values: Vec<Scaled> = f.iter().map(|v| scale * Scaled::new(*v)).collect();
        let mut dense = values.clone();
        dense.push(values[0]);
        Ok(ModeSolution {
            xi: field.xi.clone(),
            values,
            formula: Formula::FourierDiagonal,
            max_exponent: 0.0,
            residual: 0.0,
            residual_kind: ResidualKind::NotComputed,
            refinement: 1,
            dense,
            steps: vec![],
            closure: Scaled::ZERO,
            diagnostics: vec![],
        })
    }

    /// `amp·gauge` on `2πj/n` without the global scale, `j = 0..n`.
    fn source_on_grid(&self, field: &ModeField, src: &dyn ModeSource, n: usize) -> Vec<Complex64> {
        let mut amp = src.amp_grid(n);
        amp.truncate(n);
        if let Some(ts) = src.gauge() {
            let gs = self.g_at(field, ts).re;
            for (j, v) in amp.iter_mut().enumerate() {
                let t = TAU * j as f64 / n as f64;
                *v *= Complex64::from_polar(1.0, gs - self.g_at(field, t).re);
            }
        }
        amp
    }

    /// Closed loops run on every `stride`-th output point when the inner exponent is large.
    fn recursion(&self, field: &ModeField, src: &dyn ModeSource, r: usize, force: Option<Formula>, stride: usize) -> Result<ModeSolution> {
        let p = self.grid * r;
        let n = 4 * p;
        let h = TAU / p as f64;
        let tab = self.tables(n);
        let g: Vec<Complex64> = (0..=n)
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, s) in field.symbols.iter().enumerate() {
                    acc += Complex64::new(tab.big_a[k][i], tab.big_b[k][i]) * s;
                }
                acc
            })
            .collect();
        let im_g: Vec<f64> = (0..=p).map(|k| g[4 * k].im).collect();
        let (chosen, e1, e2) = self.choose(field, &im_g);
        let formula = force.unwrap_or(chosen);
        let max_exponent = if formula == Formula::Solu1 { e1 } else { e2 };
        if max_exponent > EXPONENT_BUDGET && e1.min(e2) > EXPONENT_BUDGET {
            return Err(Error::OverflowUnresolvable { xi: field.xi.clone(), exponent: e1.min(e2) });
        }
        let amp = src.amp_grid(n);
        let gauge = src.gauge().map(|ts| self.g_at(field, ts).re);
        let scale = src.scale();
        let mut diagnostics = vec![];
        if field.im_sign == SignKind::ChangesSign && force.is_none() {
            diagnostics.push(format!("Im M changes sign; {formula:?} chosen with inner exponents {e1:.3} / {e2:.3}"));
        }
        let hs = Scaled::new(Complex64::new(h, 0.0)) * scale;
        let panel = |k: usize| -> (Scaled, Scaled) {
            let (a, b) = (4 * k, 4 * k + 4);
            let mut e = [Complex64::new(0.0, 0.0); 5];
            let mut f = [Complex64::new(0.0, 0.0); 5];
            for i in 0..5 {
                let gi = g[a + i];
                e[i] = match (formula, gauge) {
                    (Formula::Solu1, None) => -I * (g[b] - gi),
                    (Formula::Solu1, Some(c)) => Complex64::new(g[b].im - gi.im, c - g[b].re),
                    (_, None) => I * (gi - g[a]),
                    (_, Some(c)) => Complex64::new(g[a].im - gi.im, c - g[a].re),
                };
                f[i] = amp[a + i];
            }
            let prop = if formula == Formula::Solu1 { Scaled::exp_of(-I * (g[b] - g[a])) } else { Scaled::exp_of(I * (g[b] - g[a])) };
            (prop, panel_integral(&e, &f) * hs)
        };
        let neg = Scaled::new(Complex64::new(-1.0, 0.0));
        let steps: Vec<(Scaled, Scaled)> = (0..p)
            .map(|k| {
                let (prop, inc) = panel(k);
                if formula == Formula::Solu1 { (prop, inc) } else { (prop, neg * inc) }
            })
            .collect();
        let closure = if formula == Formula::Solu1 { inv_one_minus_exp(-TAU * I * field.m0) } else { inv_one_minus_exp(TAU * I * field.m0) };
        let mut dense = vec![Scaled::ZERO; p + 1];
        if formula == Formula::Solu1 {
            dense[0] = loop_value(&steps, 0, formula) * closure;
            for k in 0..p {
                dense[k + 1] = steps[k].0 * dense[k] + steps[k].1;
            }
        } else {
            dense[p] = loop_value(&steps, 0, formula) * closure;
            for k in (0..p).rev() {
                dense[k] = steps[k].0 * dense[k + 1] + steps[k].1;
            }
        }
        // propagation amplifies rounding by up to e^{max_exponent}; past that, every
        // output point gets its own closed loop
        if max_exponent > STABLE_EXPONENT {
            if self.grid / stride * p <= LOOP_BUDGET {
                for j in (0..self.grid).step_by(stride) {
                    dense[j * r] = loop_value(&steps, j * r, formula) * closure;
                }
                dense[p] = dense[0];
            } else {
                diagnostics.push(format!("grid values propagated through inner exponent {max_exponent:.1}"));
            }
        }
        let values = (0..self.grid).map(|j| dense[j * r]).collect();
        Ok(ModeSolution {
            xi: field.xi.clone(),
            values,
            formula,
            max_exponent,
            residual: 0.0,
            residual_kind: ResidualKind::NotComputed,
            refinement: r,
            dense,
            steps,
            closure,
            diagnostics,
        })
    }

    /// `û(t)` at an arbitrary time: closed loop to the preceding panel endpoint, then one partial forward step.
    pub fn value_at(&self, sol: &ModeSolution, src: &dyn ModeSource, t: f64) -> Result<Scaled> {
        let field = self.field(&sol.xi)?;
        let t = t.rem_euclid(TAU);
        let p = sol.dense.len() - 1;
        let h = TAU / p as f64;
        let (k, dt) = rem_panel(t, h, p);
        let base = if sol.steps.is_empty() { sol.dense[k] } else { loop_value(&sol.steps, k, sol.formula) * sol.closure };
        if dt == 0.0 {
            return Ok(base);
        }
        let ta = k as f64 * h;
        let gb = self.g_at(&field, t);
        let ga = self.g_at(&field, ta);
        let gauge = src.gauge().map(|ts| self.g_at(&field, ts).re);
        let mut e = [Complex64::new(0.0, 0.0); 5];
        let mut f = [Complex64::new(0.0, 0.0); 5];
        for i in 0..5 {
            let ti = ta + dt * i as f64 / 4.0;
            let gi = self.g_at(&field, ti);
            e[i] = match gauge {
                None => -I * (gb - gi),
                Some(c) => Complex64::new(gb.im - gi.im, c - gb.re),
            };
            f[i] = src.amp(ti);
        }
        let inc = panel_integral(&e, &f) * Scaled::new(Complex64::new(dt, 0.0)) * src.scale();
        Ok(Scaled::exp_of(-I * (gb - ga)) * base + inc)
    }

    fn attach_residual(&self, field: &ModeField, src: &dyn ModeSource, sol: &mut ModeSolution, allow_refine: bool) -> Result<()> {
        let n = self.grid;
        let eref = sol.values.iter().chain(std::iter::once(&src.scale())).filter(|v| !v.is_zero()).map(|v| v.exp).max();
        let Some(eref) = eref else {
            sol.residual = 0.0;
            sol.residual_kind = ResidualKind::Spectral;
            return Ok(());
        };
        let down = |v: &Scaled| Scaled { mant: v.mant, exp: v.exp - eref }.to_complex();
        let u: Vec<Complex64> = sol.values.iter().map(down).collect();
        let sc = down(&src.scale());
        let f: Vec<Complex64> = self.source_on_grid(field, src, n).iter().map(|v| v * sc).collect();
        let mut spec = u.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut spec);
        let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        let tail: f64 = spec.iter().enumerate().filter(|(j, _)| (n / 4..=3 * n / 4).contains(j)).map(|(_, c)| c.norm_sqr()).sum();
        let fnorm = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if total == 0.0 || tail <= 1e-24 * total {
            for (j, c) in spec.iter_mut().enumerate() {
                let k = if j < n / 2 { j as f64 } else if j > n / 2 { j as f64 - n as f64 } else { 0.0 };
                *c *= I * k / n as f64;
            }
            FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
            let mut worst = 0.0f64;
            for j in 0..n {
                let t = TAU * j as f64 / n as f64;
                let m = self.m_at(field, t);
                worst = worst.max((spec[j] + I * m * u[j] - f[j]).norm());
            }
            // `1 + ‖f‖` in absolute units, expressed relative to `2^eref`
            let one = down(&Scaled::new(Complex64::new(1.0, 0.0))).norm();
            sol.residual = worst / (one + fnorm);
            sol.residual_kind = ResidualKind::Spectral;
        } else if allow_refine && sol.formula != Formula::FourierDiagonal {
            // compare on closed-loop points only; propagated values carry the rounding blowup
            let p = n * sol.refinement * 2;
            let mut stride = 1;
            if sol.max_exponent > STABLE_EXPONENT {
                while n / stride * p > LOOP_BUDGET && stride < n {
                    stride *= 2;
                }
            }
            let fine = self.recursion(field, src, sol.refinement * 2, Some(sol.formula), stride)?;
            let pairs = || sol.values.iter().zip(&fine.values).step_by(stride);
            let unorm = pairs().map(|(v, _)| down(v).norm()).fold(0.0, f64::max);
            let diff = pairs().map(|(a, b)| (down(a) - down(b)).norm()).fold(0.0, f64::max);
            sol.residual = if unorm > 0.0 { diff / unorm } else { diff };
            sol.residual_kind = ResidualKind::Refinement;
        } else {
            sol.residual_kind = ResidualKind::NotComputed;
        }
        Ok(())
    }

    /// Solve without residual bookkeeping; used for profiles.
    pub fn solve_fast(&self, xi: &[i64], src: &dyn ModeSource) -> Result<ModeSolution> {
        let field = self.field(xi)?;
        if is_resonant(field.m0, RESONANCE_TOL) {
            let d = (field.m0.re - field.m0.re.round()).hypot(field.m0.im);
            return Err(Error::ResonantMode { xi: xi.to_vec(), dist: d });
        }
        if self.constant_coefficients() && src.gauge().is_none() {
            return self.diagonal(&field, src);
        }
        let r = self.refinement(&field, src);
        self.recursion(&field, src, r, None, 1)
    }
}

/// Classical fourth-order shooting for the periodic solution, independent of the integral formulas.
pub fn oracle_solve_mode(op: &OperatorSpec, xi: &[i64], src: &dyn ModeSource, grid: usize) -> Result<ModeSolution> {
    let symbols = op.term_symbols(xi)?;
    let m0 = op.m0(xi)?;
    let theta = (1.0 - (-TAU * I * m0).exp()).norm();
    if theta < 1e-12 {
        return Err(Error::IllConditioned(theta));
    }
    let sup_m: f64 = op.terms.iter().zip(&symbols).map(|(t, p)| (t.a.sup_norm() + t.b.sup_norm()) * p.norm()).sum();
    let sup_im: f64 = op.terms.iter().zip(&symbols).map(|(t, p)| t.a.sup_norm() * p.im.abs() + t.b.sup_norm() * p.re.abs()).sum();
    if TAU * sup_im > ORACLE_EXPONENT_BUDGET {
        return Err(Error::OverflowUnresolvable { xi: xi.to_vec(), exponent: TAU * sup_im });
    }
    let sc = src.scale();
    if sc.exp.abs() > 900 {
        return Err(Error::BadInput("source scale outside the double range".into()));
    }
    let scale = sc.to_complex();
    let anti: Vec<(Antiderivative, Antiderivative)> = op.terms.iter().map(|t| (t.a.antiderivative(), t.b.antiderivative())).collect();
    let re_g = |t: f64| -> f64 { anti.iter().zip(&symbols).map(|((a, b), p)| (Complex64::new(a.eval(t), b.eval(t)) * p).re).sum() };
    let gauge = src.gauge().map(|ts| re_g(ts));
    let m_at = |t: f64| -> Complex64 { op.terms.iter().zip(&symbols).map(|(term, p)| Complex64::new(term.a.eval(t), term.b.eval(t)) * p).sum() };
    let f_at = |t: f64| -> Complex64 {
        let base = src.amp(t) * scale;
        match gauge {
            Some(c) => base * Complex64::from_polar(1.0, c - re_g(t)),
            None => base,
        }
    };
    let h_out = TAU / grid as f64;
    let sub = ((sup_m * h_out / 0.02).ceil() as usize).max(4);
    let h = h_out / sub as f64;
    // integrate in the direction in which the homogeneous solution decays on average:
    // forward for Im M₀ ≤ 0, otherwise w(s) = û(2π - s) with w' = iM w - f
    let back = m0.im > 0.0;
    let sgn = if back { -1.0 } else { 1.0 };
    let rhs = |t: f64, m: Complex64, v: Complex64, with_f: bool| -> Complex64 {
        let hom = -I * m * v * sgn;
        if with_f {
            hom + f_at(t) * sgn
        } else {
            hom
        }
    };
    let t_of = |s: f64| if back { TAU - s } else { s };
    // y: particular solution from 0, z: homogeneous solution from 1
    let mut y = Complex64::new(0.0, 0.0);
    let mut z = Complex64::new(1.0, 0.0);
    let mut ys = Vec::with_capacity(grid);
    let mut zs = Vec::with_capacity(grid);
    for j in 0..grid {
        ys.push(y);
        zs.push(z);
        for k in 0..sub {
            let s = j as f64 * h_out + k as f64 * h;
            let (t1, t2, t3) = (t_of(s), t_of(s + h / 2.0), t_of(s + h));
            let (m1, m2, m3) = (m_at(t1), m_at(t2), m_at(t3));
            let k1 = rhs(t1, m1, y, true);
            let k2 = rhs(t2, m2, y + k1 * (h / 2.0), true);
            let k3 = rhs(t2, m2, y + k2 * (h / 2.0), true);
            let k4 = rhs(t3, m3, y + k3 * h, true);
            y += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
            let l1 = rhs(t1, m1, z, false);
            let l2 = rhs(t2, m2, z + l1 * (h / 2.0), false);
            let l3 = rhs(t2, m2, z + l2 * (h / 2.0), false);
            let l4 = rhs(t3, m3, z + l3 * h, false);
            z += (l1 + 2.0 * l2 + 2.0 * l3 + l4) * (h / 6.0);
        }
    }
    // the starting value c solves c = c·z(2π) + y(2π)
    let c = y / (1.0 - z);
    let mut vals: Vec<Complex64> = ys.iter().zip(&zs).map(|(y, z)| y + c * z).collect();
    if back {
        // vals[j] = û(2π - jh)
        vals = (0..grid).map(|j| vals[(grid - j) % grid]).collect();
    }
    let values: Vec<Scaled> = vals.into_iter().map(Scaled::new).collect();
    let mut dense = values.clone();
    dense.push(values[0]);
    Ok(ModeSolution {
        xi: xi.to_vec(),
        values,
        formula: Formula::Solu1,
        max_exponent: TAU * sup_im,
        residual: 0.0,
        residual_kind: ResidualKind::NotComputed,
        refinement: sub,
        dense,
        steps: vec![],
        closure: Scaled::ZERO,
        diagnostics: vec!["fourth-order shooting".into()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order")]
pub enum DecayClass {
    RapidDecay,
    SlowDecay(f64),
    Resonant,
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub xi: Vec<i64>,
    pub norm: f64,
    pub ln_sup_u: f64,
    pub ln_sup_f: f64,
    pub formula: Option<Formula>,
    pub max_exponent: f64,
    pub residual: f64,
    pub residual_kind: ResidualKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellRow {
    pub shell: u32,
    pub radius: f64,
    pub ln_sup_u: f64,
    pub ln_sup_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub rows: Vec<DecayRow>,
    pub shells: Vec<ShellRow>,
    /// `-slope` of `ln sup|û|` against `ln |ξ|` over the shells.
    pub order: f64,
    pub classification: DecayClass,
    pub source_rapid: bool,
    pub k_rapid: f64,
    pub ximax: u64,
}

fn fmt_ln(l: f64) -> String {
    if l == f64::NEG_INFINITY {
        return "0".into();
    }
    let d = l / std::f64::consts::LN_10;
    let e = d.floor();
    format!("{:.6}e{}", 10f64.powf(d - e), e as i64)
}

/// Shell maxima and the rapid-decay test on `(|ξ|, ln sup)` pairs.
pub fn shell_rows(pairs: &[(f64, f64, f64)]) -> Vec<ShellRow> {
    let top = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    if top < 1.0 {
        return vec![];
    }
    (0..=shells_up_to(top as u64))
        .filter_map(|k| {
            let (lo, hi) = ((1u64 << k) as f64, (1u64 << (k + 1)) as f64);
            let inside: Vec<&(f64, f64, f64)> = pairs.iter().filter(|p| (lo..hi).contains(&p.0)).collect();
            if inside.is_empty() {
                return None;
            }
            let u = inside.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let f = inside.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
            Some(ShellRow { shell: k, radius: lo, ln_sup_u: u, ln_sup_f: f })
        })
        .collect()
}

/// Rapid decay on the top three shells: `sup ≤ R^{-K}` or local log-log slope `≤ -K`.
pub fn is_rapid(shells: &[(f64, f64)], k: f64) -> bool {
    if shells.len() < 3 {
        return false;
    }
    let top = &shells[shells.len() - 3..];
    if top.iter().all(|(_, l)| *l == f64::NEG_INFINITY) {
        return true;
    }
    if top.iter().all(|(r, l)| *l <= -k * r.ln()) {
        return true;
    }
    if top.iter().any(|(_, l)| !l.is_finite()) {
        return false;
    }
    let xs: Vec<f64> = top.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = top.iter().map(|(_, l)| *l).collect();
    linear_fit(&xs, &ys).0 <= -k
}

pub fn fitted_order(shells: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = shells.iter().filter(|(r, l)| *r >= 4.0 && l.is_finite()).map(|(r, l)| (r.ln(), *l)).collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    -linear_fit(&xs, &ys).0
}

pub fn decay_profile(op: &OperatorSpec, source: &Separable, ximax: u64, cfg: &RunConfig) -> Result<DecayProfile> {
    let solver = ModeSolver::new(op, cfg.grid)?;
    let pts = lattice_points(op.dim, ximax, cfg.shell_samples, cfg.seed);
    let rows: Vec<DecayRow> = pts
        .par_iter()
        .map(|xi| {
            let norm = xi.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let base = DecayRow {
                xi: xi.clone(),
                norm,
                ln_sup_u: f64::NEG_INFINITY,
                ln_sup_f: f64::NEG_INFINITY,
                formula: None,
                max_exponent: 0.0,
                residual: 0.0,
                residual_kind: ResidualKind::NotComputed,
                note: None,
            };
            let src = match source.mode(xi) {
                Ok(s) => s,
                Err(e) => return DecayRow { note: Some(e.to_string()), ..base },
            };
            let ln_f = match &src {
                GridOrZero::Zero => f64::NEG_INFINITY,
                GridOrZero::Profile { profile, scale } => scale.ln_abs() + profile.sup_norm().ln(),
            };
            match solver.solve_fast(xi, &src) {
                Ok(sol) => DecayRow {
                    ln_sup_u: sol.ln_sup(),
                    ln_sup_f: ln_f,
                    formula: Some(sol.formula),
                    max_exponent: sol.max_exponent,
                    ..base
                },
                Err(e) => DecayRow { ln_sup_f: ln_f, note: Some(e.to_string()), ..base },
            }
        })
        .collect();
    Ok(profile_from_rows(rows, cfg.k_rapid, ximax))
}

pub fn profile_from_rows(rows: Vec<DecayRow>, k_rapid: f64, ximax: u64) -> DecayProfile {
    let solved: Vec<(f64, f64, f64)> = rows.iter().filter(|r| r.note.is_none()).map(|r| (r.norm, r.ln_sup_u, r.ln_sup_f)).collect();
    let shells = shell_rows(&solved);
    let su: Vec<(f64, f64)> = shells.iter().map(|s| (s.radius, s.ln_sup_u)).collect();
    let sf: Vec<(f64, f64)> = shells.iter().map(|s| (s.radius, s.ln_sup_f)).collect();
    let order = fitted_order(&su);
    let top_radius = shells.len().checked_sub(3).map(|i| shells[i].radius).unwrap_or(0.0);
    let failed_top = |key: &str| rows.iter().any(|r| r.norm >= top_radius && r.note.as_deref().is_some_and(|n| n.contains(key)));
    let classification = if failed_top("resonant") {
        DecayClass::Resonant
    } else if failed_top("exponent") {
        DecayClass::Overflow
    } else if is_rapid(&su, k_rapid) {
        DecayClass::RapidDecay
    } else {
        DecayClass::SlowDecay(order)
    };
    DecayProfile { source_rapid: is_rapid(&sf, k_rapid), rows, shells, order, classification, k_rapid, ximax }
}

impl DecayProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("xi,sup_u,sup_f,formula,max_exponent,residual\n");
        for r in &self.rows {
            let xi = r.xi.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            let formula = r.formula.map(|f| format!("{f:?}")).unwrap_or_else(|| r.note.clone().unwrap_or_default().replace(',', ";"));
            s.push_str(&format!("{xi},{},{},{},{:.6},{:e}\n", fmt_ln(r.ln_sup_u), fmt_ln(r.ln_sup_f), formula, r.max_exponent, r.residual));
        }
        s
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "classification": self.classification,
            "order": if self.order.is_finite() { json!(self.order) } else { Value::Null },
            "source_rapid": self.source_rapid,
            "k_rapid": self.k_rapid,
            "ximax": self.ximax,
            "shells": self.shells.iter().map(|s| json!({
                "shell": s.shell, "radius": s.radius,
                "ln_sup_u": if s.ln_sup_u.is_finite() { json!(s.ln_sup_u) } else { Value::Null },
                "ln_sup_f": if s.ln_sup_f.is_finite() { json!(s.ln_sup_f) } else { Value::Null },
            })).collect::<Vec<_>>(),
            "skipped": self.rows.iter().filter(|r| r.note.is_some()).count(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Conjugation factor on `2πj/T`: `e^{-i(A-a₀t)p}` (a-side) or `e^{(B-b₀t)p}` (b-side), inverted on request.
pub fn normal_form_factor(op: &OperatorSpec, xi: &[i64], side: Side, dir: Direction, grid: usize) -> Result<Vec<Scaled>> {
    if op.form != Form::Single {
        return Err(Error::BadInput("normal form is defined for the single-term operator".into()));
    }
    let p = op.symbol().eval(xi)?;
    let per = match side {
        Side::A => op.a().antiderivative().periodic_part,
        Side::B => op.b().antiderivative().periodic_part,
    };
    let sign = if dir == Direction::Forward { 1.0 } else { -1.0 };
    Ok(per
        .eval_grid(grid)
        .into_iter()
        .map(|v| {
            let z = match side {
                Side::A => -I * v * p,
                Side::B => v * p,
            };
            Scaled::exp_of(z * sign)
        })
        .collect())
}

/// Apply `Ψ_a^{±1}` or `Ψ_b^{±1}` to per-mode grid functions.
pub fn normal_form_transform(
    op: &OperatorSpec,
    modes: &[(Vec<i64>, Vec<Scaled>)],
    side: Side,
    dir: Direction,
    cfg: &RunConfig,
) -> Result<Vec<(Vec<i64>, Vec<Scaled>)>> {
    let part = match side {
        Side::A => Part::Im,
        Side::B => Part::Re,
    };
    let gc = op.symbol().classify_growth(part, cfg.ximax_scan.min(1 << 16), cfg.shell_samples, cfg.seed);
    if !gc.is_log() {
        let what = if side == Side::A { "β" } else { "α" };
        return Err(Error::GrowthHypothesisViolated(format!("{what} is not at most logarithmic")));
    }
    modes
        .iter()
        .map(|(xi, vals)| {
            let fac = normal_form_factor(op, xi, side, dir, vals.len())?;
            Ok((xi.clone(), vals.iter().zip(&fac).map(|(v, f)| *v * *f).collect()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(text: &str) -> OperatorSpec {
        OperatorSpec::from_json_str(text).unwrap()
    }

    fn one() -> TrigSource {
        TrigSource::new(vec![(0, Complex64::new(1.0, 0.0))])
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn moments_match_quadrature() {
        for z in [Complex64::new(0.3, -0.2), Complex64::new(-3.9, 1.0), Complex64::new(-40.0, 300.0), Complex64::new(0.0, 5.0)] {
            let g = exp_moments(z);
            for (j, gj) in g.iter().enumerate() {
                let n = 200000;
                let q: Complex64 = (0..n)
                    .map(|i| {
                        let y = (i as f64 + 0.5) / n as f64;
                        (z * y).exp() * y.powi(j as i32)
                    })
                    .sum::<Complex64>()
                    / n as f64;
                assert!((q - gj).norm() < 1e-7 * (1.0 + gj.norm()), "{z} {j} {q} {gj}");
            }
        }
    }

    #[test]
    fn constant_imaginary_multiplier() {
        // M ≡ i, f ≡ 1: periodic solution of û' - û = 1 is -1
        let o = op(r#"{"a":0,"b":1,"symbol":"1"}"#);
        let s = ModeSolver::new(&o, 64).unwrap();
        for f in [Formula::Solu1, Formula::Solu2, Formula::FourierDiagonal] {
            let sol = s.solve_mode_with(&[1], &one(), Some(f)).unwrap();
            for v in sol.to_complex() {
                assert!((v + 1.0).norm() < 1e-10, "{f:?} {v}");
            }
        }
        let o2 = op(r#"{"a":0,"b":{"trigpoly":{"cos":[1],"sin":[0]}},"symbol":"1"}"#);
        let orc = oracle_solve_mode(&o2, &[1], &one(), 64).unwrap();
        assert!(orc.to_complex().iter().all(|v| (v + 1.0).norm() < 1e-9));
    }

    #[test]
    fn single_fourier_mode() {
        let c = 0.3;
        let o = op(&format!(r#"{{"a":{c},"b":0,"symbol":"1"}}"#));
        let s = ModeSolver::new(&o, 128).unwrap();
        let src = TrigSource::new(vec![(1, Complex64::new(1.0, 0.0))]);
        for f in [Formula::Solu1, Formula::Solu2] {
            let sol = s.solve_mode_with(&[1], &src, Some(f)).unwrap();
            for (j, v) in sol.to_complex().iter().enumerate() {
                let t = TAU * j as f64 / 128.0;
                let want = -I * Complex64::from_polar(1.0, t) / (1.0 + c);
                assert!((v - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn recursion_matches_oracle() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[1,0.5],"sin":[0.3]}},"b":{"trigpoly":{"cos":[0.2,0],"sin":[1]}},"symbol":"xi1 + 0.5*i*xi1*xi1"}"#);
        let s = ModeSolver::new(&o, 256).unwrap();
        let src = TrigSource::new(vec![(0, Complex64::new(1.0, 0.5)), (2, Complex64::new(0.0, -0.7)), (-3, Complex64::new(0.2, 0.0))]);
        for x in [-3i64, 1, 2, 5] {
            let a = s.solve_mode(&[x], &src).unwrap();
            let b = oracle_solve_mode(&o, &[x], &src, 256).unwrap();
            let d = max_diff(&a.to_complex(), &b.to_complex());
            assert!(d < 1e-7, "ξ={x}: {d}");
            assert!(a.residual < 1e-6, "{x}: {} {:?}", a.residual, a.residual_kind);
            let other = if a.formula == Formula::Solu1 { Formula::Solu2 } else { Formula::Solu1 };
            let c = s.solve_mode_with(&[x], &src, Some(other)).unwrap();
            let scale = a.to_complex().iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(max_diff(&a.to_complex(), &c.to_complex()) <= 1e-8 * scale);
        }
    }

    #[test]
    fn resonant_mode_refused() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[0.5,1]}},"b":0,"symbol":"xi1*xi1"}"#);
        let s = ModeSolver::new(&o, 64).unwrap();
        assert!(matches!(s.solve_mode(&[2], &one()), Err(Error::ResonantMode { .. })));
    }

    #[test]
    fn huge_exponents_stay_finite() {
        // Im M = ξ² sin t: inner exponents of size 2ξ²
        let o = op(r#"{"a":{"trigpoly":{"cos":[0,0],"sin":[1]}},"b":0.5,"symbol":"xi1 + i*xi1*xi1"}"#);
        let s = ModeSolver::new(&o, 256).unwrap();
        let sol = s.solve_mode(&[40], &one()).unwrap();
        assert!(sol.max_exponent > 1000.0);
        assert!(sol.values.iter().all(|v| v.mant.norm().is_finite()));
    }

    #[test]
    fn normal_form_round_trip_and_identity() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[1],"sin":[]}},"b":{"trigpoly":{"cos":[0,0],"sin":[1]}},"symbol":"pow(absxi,-0.5)"}"#);
        let cfg = RunConfig::default();
        let vals: Vec<Scaled> = (0..64).map(|j| Scaled::new(Complex64::new((j as f64).sin(), 0.3))).collect();
        let modes = vec![(vec![3i64], vals.clone())];
        for side in [Side::A, Side::B] {
            let fw = normal_form_transform(&o, &modes, side, Direction::Forward, &cfg).unwrap();
            let back = normal_form_transform(&o, &fw, side, Direction::Inverse, &cfg).unwrap();
            for (x, y) in back[0].1.iter().zip(&vals) {
                assert!((x.to_complex() - y.to_complex()).norm() < 1e-10);
            }
        }
        let fa = normal_form_factor(&o, &[3], Side::A, Direction::Forward, 64).unwrap();
        assert!(fa.iter().all(|v| (v.to_complex() - 1.0).norm() < 1e-14));
        let bad = op(r#"{"a":{"trigpoly":{"cos":[1,1]}},"b":0,"symbol":"i*absxi"}"#);
        assert!(matches!(normal_form_transform(&bad, &modes, Side::A, Direction::Forward, &cfg), Err(Error::GrowthHypothesisViolated(_))));
    }

    #[test]
    fn conjugation_matches_direct_solve() {
        // D_t + (1 + i sin t)|D_x|^{-1/2}: Ψ_b removes sin t
        let o = op(r#"{"a":1,"b":{"trigpoly":{"cos":[0,0],"sin":[1]}},"symbol":"pow(absxi,-0.5)"}"#);
        let l0 = op(r#"{"a":1,"b":0,"symbol":"pow(absxi,-0.5)"}"#);
        let cfg = RunConfig::default();
        let n = 128;
        let s = ModeSolver::new(&o, n).unwrap();
        let s0 = ModeSolver::new(&l0, n).unwrap();
        let fvals: Vec<Complex64> = (0..n).map(|j| Complex64::new((TAU * j as f64 / n as f64).cos(), 0.2)).collect();
        for x in 2..=16i64 {
            let direct = s.solve_mode(&[x], &GridSource::new(fvals.clone()).unwrap()).unwrap();
            let fs = vec![(vec![x], fvals.iter().map(|v| Scaled::new(*v)).collect::<Vec<_>>())];
            let g = normal_form_transform(&o, &fs, Side::B, Direction::Inverse, &cfg).unwrap();
            let gsrc = GridSource::new(g[0].1.iter().map(|v| v.to_complex()).collect()).unwrap();
            let v = s0.solve_mode(&[x], &gsrc).unwrap();
            let back = normal_form_transform(&o, &[(vec![x], v.values.clone())], Side::B, Direction::Forward, &cfg).unwrap();
            let via: Vec<Complex64> = back[0].1.iter().map(|v| v.to_complex()).collect();
            assert!(max_diff(&direct.to_complex(), &via) < 1e-6, "ξ={x}");
        }
    }

    #[test]
    fn zero_source_gives_zero() {
        let o = op(r#"{"a":{"trigpoly":{"cos":[1,1]}},"b":1,"symbol":"i*absxi"}"#);
        let p = decay_profile(&o, &Separable::zero(), 64, &RunConfig { grid: 64, ..RunConfig::default() }).unwrap();
        assert!(p.rows.iter().all(|r| r.ln_sup_u == f64::NEG_INFINITY));
        assert_eq!(p.classification, DecayClass::RapidDecay);
    }

    #[test]
    fn window_gain_brute_force() {
        let v: Vec<f64> = (0..=40).map(|i| ((i as f64) * 0.7).sin() * 3.0 + 0.05 * i as f64).collect();
        let p = 40i64;
        let shift = v[40] - v[0];
        let at = |i: i64| if i < 0 { v[(i + p) as usize] - shift } else { v[i as usize] };
        let mut best = 0.0f64;
        for j in 0..=p {
            for i in (j - p)..=j {
                best = best.max(at(j) - at(i));
            }
        }
        assert!((max_window_gain(&v) - best).abs() < 1e-12);
    }
}
