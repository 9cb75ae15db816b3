//! Output schemas, determinism and kit translation invariance.

mod common;

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use hypotorus::config::RunConfig;
use hypotorus::counterexamples::{sign_change_construct, CounterexampleKit};
use proptest::prelude::*;
use serde_json::Value;

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    jsonschema::validator_for(&v).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn assert_valid(schema_name: &str, doc: &Value, what: &str) {
    let errors: Vec<String> = schema(schema_name).iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{what} violates {schema_name}: {errors:?}");
}

fn cli(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hypotorus"))
        .args(args)
        .arg("--out")
        .arg(out)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("cli runs")
}

fn json_outputs(out: &Path) -> Vec<PathBuf> {
    let mut files = vec![];
    for run in std::fs::read_dir(out).unwrap() {
        for f in std::fs::read_dir(run.unwrap().path()).unwrap() {
            let p = f.unwrap().path();
            if p.extension().is_some_and(|e| e == "json") {
                files.push(p);
            }
        }
    }
    files.sort();
    files
}

#[test]
fn shipped_operators_match_schema() {
    for entry in std::fs::read_dir(operators_dir()).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_valid("operator", &doc, &path.display().to_string());
    }
}

#[test]
fn cli_outputs_match_schemas() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let inputs = tempfile::tempdir().unwrap();
    let src = inputs.path().join("source.json");
    std::fs::write(&src, r#"{"log_amplitude": "-absxi", "profile": 1}"#).unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["classify", "operators/exampcc.json", "--ximax", "1024"],
        vec!["classify", "operators/sum_independent.json", "--ximax", "1024"],
        vec!["scan", "operators/exampnew1.json", "--kind", "all", "--ximax", "512"],
        vec!["counterexample", "operators/exampnew1.json", "ar1"],
        vec!["counterexample", "operators/resonant_half.json", "resonant-null", "--count", "4"],
        vec!["diophantine", r#"{"quadirr": {"d": 2, "a": [0, 1], "b": [1, 1]}}"#],
        vec!["diophantine", r#"{"liouville": {"base": 10}}"#, "--terms", "4"],
        vec!["solve", "operators/exampcc.json", src.to_str().unwrap(), "--ximax", "64"],
    ];
    for args in &runs {
        let o = cli(out, args);
        assert!(o.status.code().is_some_and(|c| c < 64), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let mut seen = std::collections::BTreeSet::new();
    for file in json_outputs(out) {
        let name = file.file_stem().unwrap().to_str().unwrap().to_string();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
        assert_valid(&name, &doc, &file.display().to_string());
        seen.insert(name);
    }
    let want = ["exponent", "growth", "kit", "profile", "resonance", "segment", "sign", "verdict"];
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), want);
}

#[test]
fn identical_runs_are_byte_identical() {
    let _g = serial();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["scan", "operators/exampsign1.json", "--kind", "all", "--ximax", "256", "--seed", "7"];
    let (o1, o2) = (cli(d1.path(), &args), cli(d2.path(), &args));
    assert_eq!(o1.status.code(), o2.status.code());
    let (f1, f2) = (json_outputs(d1.path()), json_outputs(d2.path()));
    assert!(!f1.is_empty());
    assert_eq!(f1.len(), f2.len());
    for (a, b) in f1.iter().zip(&f2) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(a.parent().unwrap().file_name(), b.parent().unwrap().file_name(), "run directories are content hashed");
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }
}

fn wrapped_gap(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(TAU);
    d.min(TAU - d)
}

fn kit_shift_agrees(base: &CounterexampleKit, moved: &CounterexampleKit, c: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(base.records.len(), moved.records.len());
    for (r, s) in base.records.iter().zip(&moved.records) {
        prop_assert_eq!(&r.xi, &s.xi);
        prop_assert!((r.ln_sup_f - s.ln_sup_f).abs() <= 1e-8 * r.ln_sup_f.abs().max(1.0), "sup f {} vs {}", r.ln_sup_f, s.ln_sup_f);
        prop_assert!((r.ln_sup_u - s.ln_sup_u).abs() <= 1e-8 * r.ln_sup_u.abs().max(1.0), "sup u {} vs {}", r.ln_sup_u, s.ln_sup_u);
        // coefficients of the moved operator are evaluated at t + c
        prop_assert!(wrapped_gap(s.t_n + c, r.t_n) <= 1e-9, "t_n {} vs {} (c = {})", r.t_n, s.t_n, c);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kit_translation_moves_maximizers(step in 1usize..1024) {
        let _g = serial();
        let cfg = RunConfig::default();
        let op = load("exampsign1_flipped");
        let c = TAU * step as f64 / cfg.grid as f64;
        let base = sign_change_construct(&op, &cfg).unwrap();
        let moved = sign_change_construct(&op.translate(c), &cfg).unwrap();
        kit_shift_agrees(&base, &moved, c)?;
    }
}
