//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

mod common;

use std::f64::consts::TAU;
use std::time::Instant;

use common::*;
use hypotorus::classifier::classify;
use hypotorus::config::RunConfig;
use hypotorus::counterexamples::{ar1_construct, segment_maximum, sign_change_construct, vanishing_order_51};
use hypotorus::diophantine::{irrationality_exponent, liouville_constant, power_sequence, ExponentFlag, TaggedConstant};
use hypotorus::exact::{rat, Exact};
use hypotorus::mode_solver::{decay_profile, oracle_solve_mode, DecayClass, Formula, ModeSolver, Separable, Side, TrigSource};
use hypotorus::operator::OperatorSpec;
use hypotorus::periodic::PeriodicFn;
use hypotorus::symbol::Part;
use hypotorus::verdict::Status;
use hypotorus::Error;
use num_bigint::BigInt;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

struct RandomSpec {
    op: OperatorSpec,
    src: TrigSource,
}

fn random_trig(rng: &mut ChaCha8Rng, mean: f64, amp: f64) -> serde_json::Value {
    let h = rng.gen_range(1..=4usize);
    let mut cos = vec![mean];
    cos.extend((1..=h).map(|k| rng.gen_range(-amp..amp) / k as f64));
    let sin: Vec<f64> = (1..=h).map(|k| rng.gen_range(-amp..amp) / k as f64).collect();
    trig_json(&cos, &sin)
}

fn random_source(rng: &mut ChaCha8Rng) -> TrigSource {
    let n = rng.gen_range(1..=3);
    TrigSource::new((0..n).map(|_| (rng.gen_range(-4..=4i64), Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect())
}

/// Trigonometric coefficients with at most four harmonics and a symbol of order one or two.
fn battery() -> Vec<RandomSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    (0..20)
        .map(|_| {
            let (a0, b0) = (rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
            let a = random_trig(&mut rng, a0, 0.5);
            let b = random_trig(&mut rng, b0, 0.5);
            let c1: f64 = rng.gen_range(0.5..1.5);
            let symbol = if rng.gen_bool(0.5) {
                format!("{c1}*xi1 + i*{}*xi1*xi1", rng.gen_range(-0.1..0.1))
            } else {
                format!("{c1}*xi1 + i*{}*xi1", rng.gen_range(-0.3..0.3))
            };
            let op = OperatorSpec::from_json(&json!({"a": a, "b": b, "symbol": symbol})).expect("random spec parses");
            RandomSpec { op, src: random_source(&mut rng) }
        })
        .collect()
}

fn modes() -> impl Iterator<Item = i64> {
    (-8..=8i64).filter(|x| *x != 0)
}

fn sup(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn criterion_01_solver_matches_oracle() {
    let _g = serial();
    let start = Instant::now();
    let (mut worst, mut solved, mut resonant, mut failures) = (0.0f64, 0, 0, vec![]);
    for (i, spec) in battery().iter().enumerate() {
        let solver = ModeSolver::new(&spec.op, 256).unwrap();
        for x in modes() {
            let fast = solver.solve_mode(&[x], &spec.src);
            let slow = oracle_solve_mode(&spec.op, &[x], &spec.src, 256);
            match (fast, slow) {
                (Ok(u), Ok(v)) => {
                    let (u, v) = (u.to_complex(), v.to_complex());
                    worst = worst.max(max_diff(&u, &v) / sup(&v).max(1.0));
                    solved += 1;
                }
                (Err(Error::ResonantMode { .. }), Err(Error::ResonantMode { .. })) => resonant += 1,
                (u, v) => failures.push(format!("spec {i} ξ={x}: {:?} / {:?}", u.err(), v.err())),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && worst <= 1e-6 && secs < 30.0;
    report(1, pass, &format!("max relative grid difference {worst:.2e} over {solved} modes ({resonant} resonant), {secs:.1} s {failures:?}"));
    assert!(pass);
}

#[test]
fn criterion_02_solu1_solu2_agree() {
    let _g = serial();
    let (mut worst, mut compared) = (0.0f64, 0);
    for spec in battery() {
        let solver = ModeSolver::new(&spec.op, 256).unwrap();
        for x in modes() {
            let Ok(base) = solver.solve_mode(&[x], &spec.src) else { continue };
            if base.max_exponent > 30.0 {
                continue;
            }
            let u1 = solver.solve_mode_with(&[x], &spec.src, Some(Formula::Solu1)).unwrap().to_complex();
            let u2 = solver.solve_mode_with(&[x], &spec.src, Some(Formula::Solu2)).unwrap().to_complex();
            worst = worst.max(max_diff(&u1, &u2) / sup(&u1).max(f64::MIN_POSITIVE));
            compared += 1;
        }
    }
    let pass = compared > 0 && worst <= 1e-8;
    report(2, pass, &format!("max relative difference {worst:.2e} over {compared} modes with exponent ≤ 30"));
    assert!(pass);
}

#[test]
fn criterion_03_constant_coefficient_diagonal() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = 128;
    let (mut worst, mut count) = (0.0f64, 0);
    for _ in 0..10 {
        let (a, b): (f64, f64) = (rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
        let (c1, c2): (f64, f64) = (rng.gen_range(0.5..1.5), rng.gen_range(-0.3..0.3));
        let op = OperatorSpec::from_json(&json!({"a": a, "b": b, "symbol": format!("{c1}*xi1 + i*{c2}*xi1")})).unwrap();
        let src = random_source(&mut rng);
        let solver = ModeSolver::new(&op, grid).unwrap();
        for x in modes() {
            let p = Complex64::new(c1 * x as f64, c2 * x as f64);
            let m0 = Complex64::new(a, b) * p;
            let u = solver.solve_mode(&[x], &src).unwrap().to_complex();
            let want: Vec<Complex64> = (0..grid)
                .map(|j| {
                    let t = TAU * j as f64 / grid as f64;
                    src.harmonics.iter().map(|(tau, c)| c / (I * (*tau as f64 + m0)) * (I * (*tau as f64 * t)).exp()).sum()
                })
                .collect();
            worst = worst.max(max_diff(&u, &want) / sup(&want).max(1.0));
            count += 1;
        }
    }
    let pass = worst <= 1e-8;
    report(3, pass, &format!("max deviation from f̂_τ/(i(τ+M₀)) {worst:.2e} over {count} modes"));
    assert!(pass);
}

#[test]
fn criterion_04_exact_power_sequences() {
    let _g = serial();
    let mut ok = true;
    for (pt, qt, l, q) in [(2, 1, 1, 2), (3, 2, 2, 3), (5, 3, 3, 4)] {
        let (pt, qt) = (BigInt::from(pt), BigInt::from(qt));
        let seq = power_sequence(&pt, &qt, l, q).unwrap();
        for (tau, xi) in seq.iter().take(10) {
            ok &= &qt * num_traits::pow(tau.clone(), q as usize) == &pt * num_traits::pow(xi.clone(), l as usize);
        }
    }
    let cfg = RunConfig::default();
    let quarter = classify(&load("sqrt2_quarter"), &cfg).status;
    let half = classify(&load("sqrt2_half"), &cfg).status;
    let pass = ok && quarter == Status::NotGh && half == Status::Gh;
    report(4, pass, &format!("power sequences exact: {ok}; sqrt2 quarter {quarter:?}, half {half:?}"));
    assert!(pass);
}

#[test]
fn criterion_05_diophantine_engine() {
    let _g = serial();
    let start = Instant::now();
    let sqrt2 = TaggedConstant::new(Exact::quad(2, rat(0, 1), rat(1, 1)).unwrap(), 256);
    let est = irrationality_exponent(&sqrt2, &BigInt::from(10u64.pow(12)), 10.0).unwrap();
    let mu = est.mu_hat.unwrap_or(f64::NAN);
    let liou = liouville_constant(5, 10).unwrap();
    let qmax = num_traits::pow(BigInt::from(10), 120);
    let lest = irrationality_exponent(&liou, &qmax, 5.0).unwrap();
    let lmu = lest.mu_hat.unwrap_or(f64::NAN);
    let secs = start.elapsed().as_secs_f64();
    let pass = (1.9..=2.1).contains(&mu) && lest.flag == ExponentFlag::LiouvilleSuspect && lmu >= 5.0 && secs < 10.0;
    report(5, pass, &format!("sqrt2 μ̂ = {mu:.4}; Liouville(5) {:?} μ̂ = {lmu:.3}; {secs:.2} s", lest.flag));
    assert!(pass);
}

#[test]
fn criterion_06_vanishing_first_rapid_decay() {
    let _g = serial();
    let op = load("vanishing_first");
    let start = Instant::now();
    let m = segment_maximum(&op, &[1024], 4096).unwrap();
    let src = Separable::from_json(&json!({"log_amplitude": "-sqrt(absxi)", "profile": {"trigpoly": {"cos": [1, 0.5]}}}), 1).unwrap();
    let prof = decay_profile(&op, &src, 4096, &RunConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = m <= 4.0 / 3.0 + 0.05 && prof.classification == DecayClass::RapidDecay && secs < 60.0;
    report(6, pass, &format!("segment maximum at ξ=1024 {m:.4}; profile {:?}; {secs:.1} s", prof.classification));
    assert!(pass);
}

#[test]
fn criterion_07_vanishing_second_lower_bound() {
    let _g = serial();
    let cfg = RunConfig::default();
    let xis: Vec<i64> = (6..=12).map(|e| 1i64 << e).collect();
    let kit = vanishing_order_51(cfg.grid, &xis, &cfg).unwrap();
    let slope = kit.slope.unwrap_or(f64::NEG_INFINITY);
    let pass = slope >= -1.2 && kit.f_rapid;
    report(7, pass, &format!("slope {slope:.3} over ξ = 64..4096; f rapid {}", kit.f_rapid));
    assert!(pass);
}

#[test]
fn criterion_08_laplace_lower_bounds() {
    let _g = serial();
    let cfg = RunConfig::default();
    let sc = sign_change_construct(&load("exampsign1_flipped"), &cfg).unwrap();
    let op = load("exampnew1");
    let k = op.symbol().ratio_accumulation(Part::Re, cfg.ximax_scan, 4, cfg.cluster_width, cfg.shell_samples, cfg.seed).unwrap()[0].k;
    let ar = ar1_construct(&op, k, None, &cfg).unwrap();
    let within = |s: Option<f64>| s.is_some_and(|s| (s + 0.5).abs() <= 0.25);
    let pass = sc.verified() && ar.verified() && within(sc.slope) && within(ar.slope);
    report(
        8,
        pass,
        &format!("SignChange verified {} slope {:?}; Ar1 (K={k:.4}) verified {} slope {:?}", sc.verified(), sc.slope, ar.verified(), ar.slope),
    );
    assert!(pass);
}

#[test]
fn criterion_09_regression_battery() {
    let _g = serial();
    let cfg = RunConfig::default();
    let expected = [
        ("exampcc", Status::Gh),
        ("exampcc2", Status::Gh),
        ("exampsign1", Status::Gh),
        ("exampnew1", Status::NotGh),
        ("exampnew2", Status::Gh),
        ("vanishing_first", Status::Gh),
        ("vanishing_second", Status::NotGh),
        ("sum_independent", Status::NotGh),
    ];
    let mut wrong = vec![];
    for (name, want) in expected {
        let got = classify(&load(name), &cfg).status;
        if got != want {
            wrong.push(format!("{name}: {got:?} (want {want:?})"));
        }
    }
    let pass = wrong.is_empty();
    report(9, pass, &format!("{}/8 agree {wrong:?}", 8 - wrong.len()));
    assert!(pass);
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

const SYMBOLS: [&str; 5] = ["xi1 + i*xi1*xi1", "sqrt(absxi) + i*absxi", "pow(absxi, -1)", "xi1 + i*log1p(absxi)", "xi1"];

fn classify_translation_suite() -> Result<(), String> {
    let cfg = small_config();
    let strategy = (0.2..1.5f64, trig_strategy(2, 1.0), -1.0..1.0f64, trig_strategy(2, 1.0), 0..SYMBOLS.len(), 0.0..TAU);
    run(40, strategy, |(a0, a, b0, b, s, shift)| {
        let (mut ac, mut bc) = (a.0, b.0);
        ac[0] = a0;
        bc[0] = b0;
        let op = OperatorSpec::from_json(&json!({"a": trig_json(&ac, &a.1), "b": trig_json(&bc, &b.1), "symbol": SYMBOLS[s]})).unwrap();
        check_translation(&op, shift, &cfg)
    })
}

fn round_trip_suite() -> Result<(), String> {
    let cfg = small_config();
    let values = prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 64);
    let strategy = (trig_strategy(3, 1.0), trig_strategy(3, 1.0), 1..60i64, values, any::<bool>());
    run(300, strategy, |(a, b, xi, v, side)| {
        let op = OperatorSpec::from_json(&json!({"a": trig_json(&a.0, &a.1), "b": trig_json(&b.0, &b.1), "symbol": "pow(absxi, -0.5) + i*log1p(absxi)"})).unwrap();
        let vals: Vec<Complex64> = v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect();
        check_round_trip(&op, xi, &vals, if side { Side::A } else { Side::B }, &cfg)
    })
}

fn gram_suite() -> Result<(), String> {
    let tol = RunConfig::default().gram_tol;
    let strategy = (trig_strategy(3, 1.0), 0.1..3.0f64, any::<bool>(), 0.5..2.0f64, any::<bool>());
    run(300, strategy, |(f, c, neg, d, use_sin)| {
        let f = PeriodicFn::trig(f.0, f.1);
        prop_assume!(f.sup_norm() > 1e-3);
        let c = if neg { -c } else { c };
        let dep = f.scaled(c);
        prop_assert!(f.linear_dependence(&dep, tol).0, "c·f must be dependent");
        // a fifth harmonic is orthogonal to every f above
        let h = if use_sin { PeriodicFn::trig(vec![0.0; 6], vec![0.0, 0.0, 0.0, 0.0, d]) } else { PeriodicFn::trig(vec![0.0, 0.0, 0.0, 0.0, 0.0, d], vec![]) };
        let ind = PeriodicFn::lin_comb(c, &f, 1.0, &h);
        let (dependent, det) = f.linear_dependence(&ind, tol);
        prop_assert!(!dependent, "det {}", det);
        Ok(())
    })
}

fn sign_suite() -> Result<(), String> {
    let tol = RunConfig::default().sign_tol;
    run(300, (trig_strategy(4, 1.0), -1.0..1.0f64), |(f, shift)| {
        let (mut cos, sin) = f;
        cos[0] += shift;
        check_sign_symmetry(&PeriodicFn::trig(cos, sin), tol)
    })
}

fn resonance_suite() -> Result<(), String> {
    let cfg = RunConfig::default();
    run(60, (1..20i64, 1..30i64, 1..=2u32, 16..400u64), |(p, q, k, ximax)| check_rational_resonances(p, q, k, ximax, &cfg))
}

#[test]
fn criterion_10_invariant_suites() {
    let _g = serial();
    let start = Instant::now();
    let suites: [(&str, u32, fn() -> Result<(), String>); 5] = [
        ("classify translation invariance", 40, classify_translation_suite),
        ("normal form round trip", 300, round_trip_suite),
        ("Gram dependence pairs", 300, gram_suite),
        ("sign report negation symmetry", 300, sign_suite),
        ("rational resonance exactness", 60, resonance_suite),
    ];
    let mut failed = vec![];
    let mut cases = 0;
    for (name, n, suite) in suites {
        cases += n;
        if let Err(e) = suite() {
            failed.push(format!("{name}: {e}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failed.is_empty() && secs < 300.0;
    report(10, pass, &format!("{cases} cases in {secs:.1} s {failed:?}"));
    assert!(pass);
}
