//! Shared fixtures and property checks for the integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard};

use hypotorus::config::RunConfig;
use hypotorus::const_coeff::{lattice_points, resonance_scan};
use hypotorus::mode_solver::{normal_form_transform, Direction, Side};
use hypotorus::operator::OperatorSpec;
use hypotorus::periodic::{PeriodicFn, SignKind};
use hypotorus::scaled::Scaled;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;


static SERIAL: Mutex<()> = Mutex::new(());

/// Runs tests one at a time so timed criteria are not measured under contention.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn operators_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("operators")
}

pub fn load(name: &str) -> OperatorSpec {
    let text = std::fs::read_to_string(operators_dir().join(format!("{name}.json"))).expect("operator file");
    OperatorSpec::from_json_str(&text).expect("operator parses")
}

/// Writes straight to the process stdout so the line survives output capture.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {criterion:>2}: {}  {detail}", if pass { "PASS" } else { "FAIL" });
}

pub fn trig_json(cos: &[f64], sin: &[f64]) -> serde_json::Value {
    serde_json::json!({"trigpoly": {"cos": cos, "sin": sin}})
}

pub fn trig_strategy(max_harmonic: usize, amp: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_harmonic).prop_flat_map(move |h| {
        (prop::collection::vec(-amp..amp, h + 1), prop::collection::vec(-amp..amp, h))
    })
}

pub fn scaled_vec(v: &[Complex64]) -> Vec<Scaled> {
    v.iter().map(|z| Scaled::new(*z)).collect()
}

pub fn mirror(kind: SignKind) -> SignKind {
    match kind {
        SignKind::NonNegative => SignKind::NonPositive,
        SignKind::NonPositive => SignKind::NonNegative,
        k => k,
    }
}

pub fn small_config() -> RunConfig {
    RunConfig { ximax_scan: 512, shell_samples: 64, ..RunConfig::default() }
}

pub fn check_translation(op: &OperatorSpec, shift: f64, cfg: &RunConfig) -> Result<(), TestCaseError> {
    let a = hypotorus::classifier::classify(op, cfg);
    let b = hypotorus::classifier::classify(&op.translate(shift), cfg);
    prop_assert_eq!(a.status, b.status, "shift {}", shift);
    Ok(())
}

pub fn check_round_trip(op: &OperatorSpec, xi: i64, vals: &[Complex64], side: Side, cfg: &RunConfig) -> Result<(), TestCaseError> {
    let modes = vec![(vec![xi], scaled_vec(vals))];
    let fw = normal_form_transform(op, &modes, side, Direction::Forward, cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = normal_form_transform(op, &fw, side, Direction::Inverse, cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let scale = vals.iter().map(|v| v.norm()).fold(1.0, f64::max);
    for (x, y) in back[0].1.iter().zip(vals) {
        prop_assert!((x.to_complex() - y).norm() <= 1e-10 * scale);
    }
    Ok(())
}

pub fn check_sign_symmetry(f: &PeriodicFn, tol: f64) -> Result<(), TestCaseError> {
    let r = f.sign_report(tol);
    let s = f.scaled(-1.0).sign_report(tol);
    prop_assert_eq!(mirror(r.kind), s.kind);
    prop_assert_eq!(r.zeros.len(), s.zeros.len());
    for (x, y) in r.zeros.iter().zip(&s.zeros) {
        prop_assert!((x.t - y.t).abs() <= 1e-12);
        prop_assert_eq!(x.order, y.order);
    }
    prop_assert!((r.min + s.max).abs() <= 1e-12 * (1.0 + r.min.abs()));
    prop_assert!((r.max + s.min).abs() <= 1e-12 * (1.0 + r.max.abs()));
    Ok(())
}

/// `M₀ = (p/q)·ξ^k` is an integer exactly when `q | ξ^k`.
pub fn check_rational_resonances(p: i64, q: i64, power: u32, ximax: u64, cfg: &RunConfig) -> Result<(), TestCaseError> {
    let sym = match power {
        1 => "xi1".to_string(),
        k => format!("pow(xi1, {k})"),
    };
    let text = serde_json::json!({"a": {"rational": [p, q]}, "b": 0, "symbol": sym}).to_string();
    let op = OperatorSpec::from_json_str(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let scan = resonance_scan(&op, ximax, cfg.resonance_tol, cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let want: Vec<Vec<i64>> = lattice_points(1, ximax, 1, 0)
        .into_iter()
        .filter(|x| {
            let v = (x[0] as i128).pow(power) * p as i128;
            v % q as i128 == 0
        })
        .collect();
    prop_assert_eq!(scan.resonant, want);
    Ok(())
}
