//! Real smooth 2π-periodic functions: the coefficients `a(t)`, `b(t)`.
//!
//! Both representations keep a cosine/sine coefficient table; a sampled
//! function additionally keeps its grid values so that evaluation on the
//! grid is exact.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::config::{DERIV_TOL, MAX_ZERO_ORDER};
use crate::error::{Error, Result};
use crate::exact::Exact;

#[derive(Debug, Clone, PartialEq)]
pub enum Repr {
    TrigPoly,
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicFn {
    repr: Repr,
    /// `c_0..c_K`
    cos: Vec<f64>,
    /// `s_1..s_K`, stored at index `k - 1`
    sin: Vec<f64>,
    /// Exact value of the mean when the constant term was given as a tagged constant.
    exact_mean: Option<Exact>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Antiderivative {
    pub slope: f64,
    pub periodic_part: PeriodicFn,
}

impl Antiderivative {
    pub fn eval(&self, t: f64) -> f64 {
        self.slope * t + self.periodic_part.eval(t)
    }

    /// Values on `t_j = 2πj/n` for `j` in `lo..hi` (any integers), using `A(t+2π) = A(t) + 2π·slope`.
    pub fn eval_extended_grid(&self, n: usize, lo: i64, hi: i64) -> Vec<f64> {
        let base = self.periodic_part.eval_grid(n);
        (lo..hi)
            .map(|j| {
                let r = j.rem_euclid(n as i64) as usize;
                self.slope * TAU * j as f64 / n as f64 + base[r]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignKind {
    ChangesSign,
    NonNegative,
    NonPositive,
    IdenticallyZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub t: f64,
    /// `None` when no derivative up to order 12 clears the tolerance.
    pub order: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub kind: SignKind,
    pub zeros: Vec<Zero>,
    pub min: f64,
    pub max: f64,
}

impl SignReport {
    pub fn changes_sign(&self) -> bool {
        self.kind == SignKind::ChangesSign
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentExtremum {
    pub value: f64,
    pub t: f64,
    pub s: f64,
}

impl PeriodicFn {
    pub fn trig(cos: Vec<f64>, sin: Vec<f64>) -> Self {
        let k = cos.len().max(sin.len() + 1).max(1);
        let mut c = cos;
        c.resize(k, 0.0);
        let mut s = sin;
        s.resize(k - 1, 0.0);
        Self { repr: Repr::TrigPoly, cos: c, sin: s, exact_mean: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::trig(vec![c], vec![])
    }

    pub fn exact_constant(c: Exact) -> Self {
        let mut f = Self::constant(c.to_f64());
        f.exact_mean = Some(c);
        f
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Function given by its values on the uniform grid `2πj/T`, `T` a power of two.
    pub fn sampled(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::BadInput(format!("sampled grid size {n} is not a power of two >= 4")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadInput("sampled values must be finite".into()));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let half = n / 2;
        let mut cos = vec![0.0; half + 1];
        let mut sin = vec![0.0; half];
        let nf = n as f64;
        cos[0] = buf[0].re / nf;
        for k in 1..half {
            cos[k] = 2.0 * buf[k].re / nf;
            sin[k - 1] = -2.0 * buf[k].im / nf;
        }
        cos[half] = buf[half].re / nf;
        Ok(Self { repr: Repr::Sampled(values), cos, sin, exact_mean: None })
    }

    /// Samples `g` on a grid of `n` points.
    pub fn from_fn(n: usize, g: impl Fn(f64) -> f64) -> Result<Self> {
        Self::sampled((0..n).map(|j| g(TAU * j as f64 / n as f64)).collect())
    }

    pub fn with_exact_mean(mut self, e: Option<Exact>) -> Self {
        self.exact_mean = e;
        self
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn is_trig(&self) -> bool {
        matches!(self.repr, Repr::TrigPoly)
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    /// Highest harmonic present.
    pub fn degree(&self) -> usize {
        self.cos.len() - 1
    }

    pub fn exact_mean(&self) -> Option<&Exact> {
        self.exact_mean.as_ref()
    }

    pub fn mean(&self) -> f64 {
        match &self.repr {
            Repr::TrigPoly => self.cos[0],
            Repr::Sampled(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    pub fn is_constant(&self) -> bool {
        let scale = self.cos[0].abs().max(1.0);
        self.cos[1..].iter().chain(&self.sin).all(|c| c.abs() <= 1e-14 * scale)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if let Repr::Sampled(v) = &self.repr {
            let n = v.len() as f64;
            let x = t.rem_euclid(TAU) * n / TAU;
            let j = x.round();
            if (x - j).abs() < 1e-12 {
                return v[(j as usize) % v.len()];
            }
        }
        self.eval_series(t, 0)
    }

    /// Derivative of order `k` at `t` from the coefficient table.
    pub fn eval_derivative(&self, t: f64, k: u32) -> f64 {
        if k == 0 {
            return self.eval(t);
        }
        self.eval_series(t, k)
    }

    fn eval_series(&self, t: f64, k: u32) -> f64 {
        let z = Complex64::from_polar(1.0, t);
        let mut w = Complex64::new(1.0, 0.0);
        let mut acc = if k == 0 { self.cos[0] } else { 0.0 };
        for j in 1..self.cos.len() {
            w *= z;
            if j % 64 == 0 {
                w = Complex64::from_polar(1.0, j as f64 * t);
            }
            let (c, s) = (self.cos[j], self.sin[j - 1]);
            // d^k/dt^k of c cos(jt) + s sin(jt) = j^k Re[(c - i s) i^k e^{ijt}]
            let amp = Complex64::new(c, -s) * Complex64::i().powu(k) * (j as f64).powi(k as i32);
            acc += (amp * w).re;
        }
        acc
    }

    /// Values on the grid `2πj/n`, exact for a sampled function with `n = T`.
    pub fn eval_grid(&self, n: usize) -> Vec<f64> {
        if let Repr::Sampled(v) = &self.repr {
            if v.len() == n {
                return v.clone();
            }
        }
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        spec[0] += self.cos[0];
        for j in 1..self.cos.len() {
            let half = Complex64::new(self.cos[j], -self.sin[j - 1]) * 0.5;
            spec[j % n] += half;
            spec[(n - j % n) % n] += half.conj();
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
        spec.iter().map(|c| c.re).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        let n = (8 * self.cos.len()).next_power_of_two().max(1024);
        self.eval_grid(n).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn derivative(&self) -> PeriodicFn {
        let k = self.cos.len();
        let mut cos = vec![0.0; k];
        let mut sin = vec![0.0; k - 1];
        for j in 1..k {
            let jf = j as f64;
            cos[j] = jf * self.sin[j - 1];
            sin[j - 1] = -jf * self.cos[j];
        }
        PeriodicFn::trig(cos, sin)
    }

    pub fn antiderivative(&self) -> Antiderivative {
        let k = self.cos.len();
        let mut cos = vec![0.0; k];
        let mut sin = vec![0.0; k - 1];
        let mut offset = 0.0;
        for j in 1..k {
            let jf = j as f64;
            sin[j - 1] = self.cos[j] / jf;
            cos[j] = -self.sin[j - 1] / jf;
            offset += self.sin[j - 1] / jf;
        }
        cos[0] = offset;
        let slope = match &self.repr {
            Repr::TrigPoly => self.cos[0],
            Repr::Sampled(_) => self.mean(),
        };
        Antiderivative { slope, periodic_part: PeriodicFn::trig(cos, sin) }
    }

    pub fn segment_integral(&self, t0: f64, t1: f64) -> f64 {
        if t0 == t1 {
            return 0.0;
        }
        let a = self.antiderivative();
        a.eval(t1) - a.eval(t0)
    }

    /// `x·f + y·g` on the common coefficient table.
    pub fn lin_comb(x: f64, f: &PeriodicFn, y: f64, g: &PeriodicFn) -> PeriodicFn {
        let k = f.cos.len().max(g.cos.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let cos = (0..k).map(|i| x * get(&f.cos, i) + y * get(&g.cos, i)).collect();
        let sin = (0..k - 1).map(|i| x * get(&f.sin, i) + y * get(&g.sin, i)).collect();
        match (&f.repr, &g.repr) {
            (Repr::Sampled(u), Repr::Sampled(v)) if u.len() == v.len() => PeriodicFn {
                repr: Repr::Sampled(u.iter().zip(v).map(|(a, b)| x * a + y * b).collect()),
                cos,
                sin,
                exact_mean: None,
            },
            (Repr::TrigPoly, Repr::TrigPoly) => PeriodicFn::trig(cos, sin),
            _ => {
                let n = 2 * (k - 1).next_power_of_two().max(2);
                let tmp = PeriodicFn::trig(cos, sin);
                PeriodicFn::sampled(tmp.eval_grid(n)).unwrap_or(tmp)
            }
        }
    }

    pub fn scaled(&self, x: f64) -> PeriodicFn {
        let mut g = PeriodicFn::lin_comb(x, self, 0.0, &PeriodicFn::zero());
        g.exact_mean = self.exact_mean.as_ref().and_then(|e| e.mul(&Exact::from_f64_exact(x)?));
        g
    }

    /// `t ↦ f(t + c)`.
    pub fn translate(&self, c: f64) -> PeriodicFn {
        let k = self.cos.len();
        let mut cos = vec![self.cos[0]; k];
        let mut sin = vec![0.0; k - 1];
        for j in 1..k {
            let (sc, cc) = (j as f64 * c).sin_cos();
            let (a, b) = (self.cos[j], self.sin[j - 1]);
            cos[j] = a * cc + b * sc;
            sin[j - 1] = b * cc - a * sc;
        }
        let mut g = PeriodicFn::trig(cos, sin);
        if let Repr::Sampled(v) = &self.repr {
            let n = v.len();
            let shift = c * n as f64 / TAU;
            if (shift - shift.round()).abs() < 1e-12 {
                let s = shift.round() as i64;
                let vals = (0..n).map(|j| v[(j as i64 + s).rem_euclid(n as i64) as usize]).collect();
                g.repr = Repr::Sampled(vals);
            }
        }
        g.exact_mean = self.exact_mean.clone();
        g
    }

    /// `t ↦ −f(−t)`.
    pub fn reflect_negate(&self) -> PeriodicFn {
        let cos = self.cos.iter().map(|c| -c).collect();
        let mut g = PeriodicFn::trig(cos, self.sin.clone());
        if let Repr::Sampled(v) = &self.repr {
            let n = v.len();
            g.repr = Repr::Sampled((0..n).map(|j| -v[(n - j) % n]).collect());
        }
        g.exact_mean = self.exact_mean.as_ref().map(Exact::neg);
        g
    }

    /// Sign classification with zeros and vanishing orders.
    pub fn sign_report(&self, tol: f64) -> SignReport {
        let n = (8 * self.cos.len()).next_power_of_two().max(2048);
        let vals = self.eval_grid(n);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = min.abs().max(max.abs());
        if norm < tol {
            return SignReport { kind: SignKind::IdenticallyZero, zeros: vec![], min, max };
        }
        let kind = if min < -tol && max > tol {
            SignKind::ChangesSign
        } else if min >= -tol {
            SignKind::NonNegative
        } else {
            SignKind::NonPositive
        };
        let h = TAU / n as f64;
        let deriv = self.derivative();
        let mut roots: Vec<f64> = Vec::new();
        for j in 0..n {
            let (t0, f0, f1) = (j as f64 * h, vals[j], vals[(j + 1) % n]);
            if f0.abs() <= tol && vals[(j + n - 1) % n].abs() <= tol && f1.abs() <= tol {
                // inside a flat run of zeros: its first point already stands for it
                continue;
            }
            if f0 == 0.0 {
                roots.push(t0);
            } else if f0 * f1 < 0.0 {
                roots.push(bisect(|t| self.eval(t), t0, t0 + h, f0));
            } else {
                // touching zero: local minimum of |f| close to zero
                let fm = vals[(j + n - 1) % n];
                let small = f0.abs() <= 1e-3 * norm;
                if small && f0.abs() <= fm.abs() && f0.abs() <= f1.abs() {
                    let (l, r) = (t0 - h, t0 + h);
                    let (dl, dr) = (deriv.eval(l), deriv.eval(r));
                    let t = if dl * dr < 0.0 { bisect(|t| deriv.eval(t), l, r, dl) } else { t0 };
                    if self.eval(t).abs() <= tol {
                        roots.push(t);
                    }
                }
            }
        }
        let mut zeros: Vec<Zero> = Vec::new();
        let stack = if roots.is_empty() { vec![] } else { self.derivative_stack() };
        for t in roots {
            let t = t.rem_euclid(TAU);
            if zeros.iter().any(|z| circ_dist(z.t, t) < 1e-8) {
                continue;
            }
            zeros.push(Zero { t, order: order_at(&stack, t) });
        }
        zeros.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        SignReport { kind, zeros, min, max }
    }

    /// Smallest `k ≥ 1` with `|f^(k)(t)| > 1e-7·‖f^(k)‖∞`.
    pub fn vanishing_order(&self, t: f64) -> Option<u32> {
        order_at(&self.derivative_stack(), t)
    }

    /// Derivatives `1..=MAX_ZERO_ORDER` with their sup norms, stopping at the first zero one.
    fn derivative_stack(&self) -> Vec<(PeriodicFn, f64)> {
        let n = (8 * self.cos.len()).next_power_of_two().max(2048);
        let mut out = Vec::new();
        let mut d = self.clone();
        for _ in 1..=MAX_ZERO_ORDER {
            d = d.derivative();
            let scale = d.eval_grid(n).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            out.push((d.clone(), scale));
            if scale == 0.0 {
                break;
            }
        }
        out
    }

    /// Maximum of `(t, s) ↦ ∫_{t-s}^t f` over `[0, 2π]²`.
    pub fn max_segment_integral(&self, grid: usize) -> SegmentExtremum {
        self.segment_extremum(grid, 1.0)
    }

    /// Minimum of `(t, s) ↦ ∫_{t-s}^t f` over `[0, 2π]²`.
    pub fn min_segment_integral(&self, grid: usize) -> SegmentExtremum {
        let e = self.segment_extremum(grid, -1.0);
        SegmentExtremum { value: -e.value, ..e }
    }

    fn segment_extremum(&self, grid: usize, sign: f64) -> SegmentExtremum {
        let n = grid.max(8);
        let a = self.antiderivative();
        // A on t_j = 2πj/n for j in -n..=n
        let av: Vec<f64> = a.eval_extended_grid(n, -(n as i64), n as i64 + 1).iter().map(|v| sign * v).collect();
        let at = |j: i64| av[(j + n as i64) as usize];
        let (mut best, mut bj, mut bk) = (f64::NEG_INFINITY, 0i64, 0i64);
        // sliding minimum of A(u) over u = t - s in [j - n, j]
        let mut window: std::collections::VecDeque<i64> = std::collections::VecDeque::new();
        for i in -(n as i64)..=n as i64 {
            while window.back().is_some_and(|&b| at(b) >= at(i)) {
                window.pop_back();
            }
            window.push_back(i);
            if i < 0 {
                continue;
            }
            while window.front().is_some_and(|&f| f < i - n as i64) {
                window.pop_front();
            }
            let lo = *window.front().unwrap();
            let v = at(i) - at(lo);
            if v > best + 1e-15 {
                best = v;
                bj = i;
                bk = i - lo;
            }
        }
        let h = TAU / n as f64;
        let sa = |t: f64| sign * a.eval(t);
        let t0 = bj as f64 * h;
        let u0 = (bj - bk) as f64 * h;
        let df = |t: f64| sign * self.eval(t);
        let (tl, th) = ((t0 - h).max(0.0), (t0 + h).min(TAU));
        let t = polish_max(&df, golden_max(&sa, tl, th), tl, th);
        let (ul, uh) = ((u0 - h).max(t - TAU), (u0 + h).min(t));
        let u = polish_max(&|u| -df(u), golden_max(&|u| -sa(u), ul, uh), ul, uh);
        let refined = sa(t) - sa(u);
        if refined >= best {
            SegmentExtremum { value: refined, t, s: t - u }
        } else {
            SegmentExtremum { value: best, t: t0, s: bk as f64 * h }
        }
    }

    /// Normalized Gram determinant of the pair; dependent below `tol`.
    pub fn linear_dependence(&self, g: &PeriodicFn, tol: f64) -> (bool, f64) {
        let ff = self.inner(self);
        let gg = g.inner(g);
        let fg = self.inner(g);
        if ff == 0.0 || gg == 0.0 {
            return (true, 0.0);
        }
        let det = (ff * gg - fg * fg) / (ff * gg);
        (det < tol, det)
    }

    /// `(2π)⁻¹∫ f g`.
    pub fn inner(&self, g: &PeriodicFn) -> f64 {
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let k = self.cos.len().max(g.cos.len());
        let mut acc = self.cos[0] * g.cos[0];
        for j in 1..k {
            acc += 0.5 * (get(&self.cos, j) * get(&g.cos, j) + get(&self.sin, j - 1) * get(&g.sin, j - 1));
        }
        acc
    }
}

fn order_at(stack: &[(PeriodicFn, f64)], t: f64) -> Option<u32> {
    for (k, (d, scale)) in stack.iter().enumerate() {
        if *scale == 0.0 {
            return None;
        }
        if d.eval(t).abs() > DERIV_TOL * scale {
            return Some(k as u32 + 1);
        }
    }
    None
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let mut slo = flo.signum();
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == slo {
            lo = mid;
            slo = fm.signum();
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-11 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    // endpoints of the bracket can beat the interior for monotone pieces
    [lo, mid, hi].into_iter().fold(mid, |b, x| if f(x) > f(b) { x } else { b })
}

/// Sharpens a maximizer `t` of a function with derivative `df` by bisecting a sign change
/// `df > 0 > df` around it; value comparisons alone only resolve `t` to `√ε`.
pub(crate) fn polish_max(df: &dyn Fn(f64) -> f64, t: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = ((t - 1e-6).max(lo), (t + 1e-6).min(hi));
    if !(df(a) > 0.0 && df(b) < 0.0) {
        return t;
    }
    for _ in 0..64 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if df(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `ψ(x) = exp(1 − 1/(1 − x²))` on `(−1, 1)`, zero outside.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// Smooth step: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let e = |x: f64| (-1.0 / x).exp();
    e(u) / (e(u) + e(1.0 - u))
}

/// The coefficient with core `−(t−π)²` on `|t−π| ≤ 1`, glued to the constant `−7`
/// over `1 ≤ |t−π| ≤ 2.5`; increasing on `[0, π)`, decreasing on `(π, 2π]`.
pub fn glued_parabola(n: usize) -> PeriodicFn {
    PeriodicFn::from_fn(n, |t| {
        let x = t - PI;
        let w = smooth_step((x.abs() - 1.0) / 1.5);
        -(x * x * (1.0 - w) + 7.0 * w)
    })
    .expect("power-of-two grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn means() {
        assert_eq!(PeriodicFn::trig(vec![1.0, 1.0], vec![]).mean(), 1.0);
        assert_eq!(PeriodicFn::trig(vec![0.0], vec![1.0]).mean(), 0.0);
        let s2 = PeriodicFn::from_fn(64, |t| t.sin().powi(2)).unwrap();
        assert!(close(s2.mean(), 0.5, 1e-12));
    }

    #[test]
    fn antiderivatives() {
        let a = PeriodicFn::trig(vec![0.0, 1.0], vec![]).antiderivative();
        assert_eq!(a.slope, 0.0);
        assert!(close(a.eval(0.7), 0.7f64.sin(), 1e-15));
        let one = PeriodicFn::constant(1.0).antiderivative();
        assert_eq!(one.slope, 1.0);
        assert!(one.periodic_part.sup_norm() == 0.0);
        let a = PeriodicFn::trig(vec![1.0, 1.0], vec![]).antiderivative();
        assert!(close(a.eval(PI), PI, 1e-14));
        assert_eq!(a.eval(0.0), 0.0);
    }

    #[test]
    fn segment_integrals() {
        let sin = PeriodicFn::trig(vec![0.0], vec![1.0]);
        assert!(close(sin.segment_integral(0.0, PI), 2.0, 1e-14));
        assert_eq!(sin.segment_integral(1.3, 1.3), 0.0);
        let f = PeriodicFn::trig(vec![1.0, 1.0], vec![]);
        assert!(close(f.segment_integral(PI / 2.0, 1.5 * PI), PI - 2.0, 1e-14));
    }

    #[test]
    fn sampled_reproduces_grid_and_interpolates() {
        let f = PeriodicFn::from_fn(32, |t| (t.sin() + 0.3 * (2.0 * t).cos()).exp()).unwrap();
        if let Repr::Sampled(v) = f.repr() {
            for (j, &x) in v.iter().enumerate() {
                assert_eq!(f.eval(TAU * j as f64 / 32.0), x);
            }
        }
        let g = PeriodicFn::from_fn(64, |t| (2.0 * t).cos()).unwrap();
        assert!(close(g.eval(0.123), (0.246f64).cos(), 1e-13));
        assert!(close(g.eval(0.123 + TAU), g.eval(0.123), 1e-12));
    }

    #[test]
    fn sign_reports() {
        let sin = PeriodicFn::trig(vec![0.0], vec![1.0]);
        assert_eq!(sin.sign_report(1e-9).kind, SignKind::ChangesSign);
        let f = PeriodicFn::trig(vec![1.0, 1.0], vec![]);
        let r = f.sign_report(1e-9);
        assert_eq!(r.kind, SignKind::NonNegative);
        assert_eq!(r.zeros.len(), 1);
        assert!(close(r.zeros[0].t, PI, 1e-7));
        assert_eq!(r.zeros[0].order, Some(2));
        let g = glued_parabola(1024);
        let r = g.sign_report(1e-9 * g.sup_norm());
        assert_eq!(r.kind, SignKind::NonPositive);
        assert_eq!(r.zeros.len(), 1);
        assert!(close(r.zeros[0].t, PI, 1e-8));
        assert_eq!(r.zeros[0].order, Some(2));
        assert_eq!(PeriodicFn::zero().sign_report(1e-9).kind, SignKind::IdenticallyZero);
    }

    #[test]
    fn glued_profile_core() {
        let g = glued_parabola(1024);
        assert!(close(g.eval(PI + 0.5), -0.25, 1e-9));
        assert!(close(g.eval(0.0), -7.0, 1e-12));
        assert!(g.mean() < 0.0);
    }

    #[test]
    fn segment_maxima() {
        let sin = PeriodicFn::trig(vec![0.0], vec![1.0]);
        let e = sin.max_segment_integral(256);
        assert!(close(e.value, 2.0, 1e-10) && close(e.t, PI, 1e-6) && close(e.s, PI, 1e-6));
        let e = PeriodicFn::constant(-1.0).max_segment_integral(256);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.s, 0.0);
        let e = PeriodicFn::trig(vec![0.0, 1.0], vec![]).max_segment_integral(256);
        assert!(close(e.value, 2.0, 1e-10));
        let e = sin.min_segment_integral(256);
        assert!(close(e.value, -2.0, 1e-10));
    }

    #[test]
    fn gram() {
        let s = PeriodicFn::trig(vec![0.0], vec![1.0]);
        let s3 = PeriodicFn::trig(vec![0.0], vec![3.0]);
        let (dep, det) = s.linear_dependence(&s3, 1e-8);
        assert!(dep && det.abs() < 1e-14);
        let c2 = PeriodicFn::trig(vec![0.5, 0.0, 0.5], vec![]);
        let s2 = PeriodicFn::trig(vec![0.5, 0.0, -0.5], vec![]);
        let (dep, det) = c2.linear_dependence(&s2, 1e-8);
        // ∫cos⁴ = ∫sin⁴ = 3π/4, ∫cos²sin² = π/4  ⇒  det = 1 − 1/9
        assert!(!dep && close(det, 8.0 / 9.0, 1e-14));
        assert!(s.linear_dependence(&PeriodicFn::zero(), 1e-8).0);
    }
}
