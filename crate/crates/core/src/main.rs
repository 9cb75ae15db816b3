use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use hypotorus::classifier::{classify, segment_exponent_scan, sign_stability_scan};
use hypotorus::config::RunConfig;
use hypotorus::const_coeff::{delta_scan_fit, resonance_scan};
use hypotorus::counterexamples::{ar1_construct, ncm2_construct, resonant_null, sign_change_construct, vanishing_order_51};
use hypotorus::diophantine::{irrationality_exponent, liouville_constant, TaggedConstant};
use hypotorus::exact::{factorial, Exact};
use hypotorus::mode_solver::{decay_profile, Separable};
use hypotorus::operator::{Form, OperatorSpec};
use hypotorus::symbol::Part;
use hypotorus::Error;

const EXIT_HYPOTHESES: u8 = 30;
const EXIT_USAGE: u8 = 64;
const EXIT_SOFTWARE: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "hypotorus", version, about = "Global hypoellipticity of D_t + (a+ib)(t)P(D_x) on the torus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Largest |ξ| scanned or solved.
    #[arg(long)]
    ximax: Option<u64>,
    /// Time grid size, a power of two.
    #[arg(long)]
    grid: Option<usize>,
    /// Working precision in bits for exact constants.
    #[arg(long)]
    precision: Option<u32>,
    /// Seed for sampled lattice directions.
    #[arg(long)]
    seed: Option<u64>,
    /// Base directory for run outputs.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Print the JSON summary on standard output.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide global hypoellipticity and print the verdict JSON.
    Classify {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solve all modes for a source and profile their decay.
    Solve {
        spec: PathBuf,
        source: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build and verify a counterexample kit.
    Counterexample {
        spec: PathBuf,
        #[arg(value_enum)]
        recipe: RecipeArg,
        /// Accumulation point K for the ratio kit; estimated when absent.
        #[arg(long, allow_hyphen_values = true)]
        k: Option<f64>,
        /// Number of resonant modes for the resonant-null kit.
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Continued fraction and irrationality-exponent table of a constant.
    Diophantine {
        /// Constant as JSON (e.g. '{"quadirr":{"d":2,"a":[0,1],"b":[1,1]}}') or a path to a JSON file.
        constant: String,
        /// Largest convergent denominator, as a decimal integer; defaults to 10^12, or to
        /// base^(terms!) for a truncated Liouville constant.
        #[arg(long)]
        qmax: Option<String>,
        /// Number of terms of a Liouville constant.
        #[arg(long)]
        terms: Option<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-range scans behind the classifier rules.
    Scan {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = ScanKind::All)]
        kind: ScanKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeArg {
    ResonantNull,
    Ncm2,
    SignChange,
    Ar1,
    VanishingOrder51,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ScanKind {
    Resonance,
    Delta,
    Sign,
    Segment,
    Growth,
    All,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::BadInput(_) => EXIT_USAGE,
            Error::HypothesesUnmet(_) | Error::NotEnoughResonances { .. } | Error::NoBadSequence(_) | Error::NoWitnesses => EXIT_HYPOTHESES,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_SOFTWARE,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, msg: e.to_string() }
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn config(c: &Common, solve: bool) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(x) = c.ximax {
        if solve {
            cfg.ximax_solve = x;
        } else {
            cfg.ximax_scan = x;
        }
    }
    if let Some(g) = c.grid {
        cfg.grid = g;
    }
    if let Some(p) = c.precision {
        cfg.precision_bits = p;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure { code: EXIT_IO, msg: format!("{}: {e}", path.display()) })
}

fn load_spec(path: &Path) -> Result<OperatorSpec, Failure> {
    let text = read(path)?;
    OperatorSpec::from_json_str(&text).map_err(|e| {
        let f = Failure::from(e);
        Failure { msg: format!("{}: {}", path.display(), f.msg), ..f }
    })
}

/// Run directory named by the content hash of the inputs and the configuration.
fn run_dir(base: &Path, cmd: &str, inputs: &[&str], cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut h = Sha256::new();
    h.update(cmd.as_bytes());
    for i in inputs {
        h.update([0u8]);
        h.update(i.as_bytes());
    }
    h.update([0u8]);
    h.update(serde_json::to_string(cfg).expect("config serializes").as_bytes());
    let dir = base.join(&hex::encode(h.finalize())[..16]);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    std::fs::write(dir.join(name), s)?;
    Ok(())
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json serializes"));
}

fn cmd_classify(spec: &Path, c: &Common) -> Outcome {
    let op = load_spec(spec)?;
    let cfg = config(c, false)?;
    let v = classify(&op, &cfg);
    let out = v.to_json();
    let dir = run_dir(&c.out, "classify", &[&op.canonical], &cfg)?;
    write_json(&dir, "verdict.json", &out)?;
    print_json(&out);
    Ok(v.status.exit_code() as u8)
}

fn cmd_solve(spec: &Path, source: &Path, c: &Common) -> Outcome {
    let op = load_spec(spec)?;
    let cfg = config(c, true)?;
    let src_text = read(source)?;
    let src_json: Value = serde_json::from_str(&src_text).map_err(|e| Failure {
        code: EXIT_USAGE,
        msg: format!("{}: parse error at {}:{}: {e}", source.display(), e.line(), e.column()),
    })?;
    let src = Separable::from_json(&src_json, op.dim)?;
    let profile = decay_profile(&op, &src, cfg.ximax_solve, &cfg)?;
    let dir = run_dir(&c.out, "solve", &[&op.canonical, &src_json.to_string()], &cfg)?;
    let summary = profile.summary_json();
    write_json(&dir, "profile.json", &summary)?;
    std::fs::write(dir.join("decay.csv"), profile.to_csv())?;
    if c.json {
        print_json(&summary);
    } else {
        println!("classification: {}", summary["classification"]);
        println!("fitted order: {}", summary["order"]);
        println!("source rapid: {}", profile.source_rapid);
        println!("outputs: {}", dir.display());
    }
    Ok(0)
}

/// Largest well-populated cluster of `α/β` over the top shells.
fn estimate_k(op: &OperatorSpec, cfg: &RunConfig) -> Result<f64, Failure> {
    if op.form != Form::Single {
        return Err(Failure { code: EXIT_HYPOTHESES, msg: "ratio kit needs a single operator".into() });
    }
    let clusters = op.symbol().ratio_accumulation(Part::Re, cfg.ximax_scan, 4, cfg.cluster_width, cfg.shell_samples, cfg.seed)?;
    clusters.first().map(|c| c.k).ok_or(Failure { code: EXIT_HYPOTHESES, msg: "no ratio accumulation point".into() })
}

fn cmd_counterexample(spec: &Path, recipe: RecipeArg, k: Option<f64>, count: usize, c: &Common) -> Outcome {
    let op = load_spec(spec)?;
    let cfg = config(c, false)?;
    let (kit, tag) = match recipe {
        RecipeArg::ResonantNull => (resonant_null(&op, count, &cfg)?, format!("resonant_null:{count}")),
        RecipeArg::Ncm2 => (ncm2_construct(&op, &cfg)?, "ncm2".into()),
        RecipeArg::SignChange => (sign_change_construct(&op, &cfg)?, "sign_change".into()),
        RecipeArg::Ar1 => {
            let k = match k {
                Some(k) => k,
                None => estimate_k(&op, &cfg)?,
            };
            (ar1_construct(&op, k, None, &cfg)?, format!("ar1:{k:e}"))
        }
        RecipeArg::VanishingOrder51 => {
            let top = c.ximax.unwrap_or(cfg.ximax_solve).max(64);
            let xis: Vec<i64> = (6..63).map(|e| 1i64 << e).take_while(|&x| x as u64 <= top).collect();
            (vanishing_order_51(cfg.grid, &xis, &cfg)?, format!("vanishing_order_51:{top}"))
        }
    };
    let dir = run_dir(&c.out, "counterexample", &[&op.canonical, &tag], &cfg)?;
    let out = kit.to_json();
    write_json(&dir, "kit.json", &out)?;
    std::fs::write(dir.join("kit.csv"), kit.to_csv())?;
    if c.json {
        print_json(&out);
    } else {
        print!("{}", kit.to_csv());
        println!("verified: {}  f rapid: {}  u rapid: {}  slope: {:?}", kit.verified(), kit.f_rapid, kit.u_rapid, kit.slope);
        println!("outputs: {}", dir.display());
    }
    Ok(if kit.verified() { 0 } else { 1 })
}

fn cmd_diophantine(constant: &str, qmax: Option<&str>, terms: Option<u32>, c: &Common) -> Outcome {
    let cfg = config(c, false)?;
    let text = if constant.trim_start().starts_with('{') { constant.to_string() } else { read(Path::new(constant))? };
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure { code: EXIT_USAGE, msg: format!("constant: parse error at {}:{}: {e}", e.line(), e.column()) })?;
    let exact = Exact::from_json(&v)?;
    let tagged = match (&exact, terms) {
        (Exact::Liouville { base, .. }, Some(n)) => liouville_constant(n, *base)?,
        _ => TaggedConstant::new(exact.clone(), cfg.precision_bits),
    };
    let qmax: BigInt = match (qmax, &exact, tagged.truncation) {
        (Some(q), _, _) => q.parse().map_err(|_| Failure { code: EXIT_USAGE, msg: format!("--qmax {q} is not an integer") })?,
        (None, Exact::Liouville { base, .. }, Some(n)) => num_traits::pow(BigInt::from(*base), factorial(n) as usize),
        _ => BigInt::from(10u64.pow(12)),
    };
    let est = irrationality_exponent(&tagged, &qmax, cfg.liouville_threshold)?;
    let dir = run_dir(&c.out, "diophantine", &[&v.to_string(), &qmax.to_string(), &format!("{terms:?}")], &cfg)?;
    let out = est.to_json();
    write_json(&dir, "exponent.json", &out)?;
    std::fs::write(dir.join("convergents.csv"), est.to_csv())?;
    if c.json {
        print_json(&out);
    } else {
        print!("{}", est.to_csv());
    }
    Ok(0)
}

fn cmd_scan(spec: &Path, kind: ScanKind, c: &Common) -> Outcome {
    let op = load_spec(spec)?;
    let cfg = config(c, false)?;
    let ximax = cfg.ximax_scan;
    let dir = run_dir(&c.out, "scan", &[&op.canonical, &format!("{}", kind as u8)], &cfg)?;
    let want = |k: ScanKind| kind == ScanKind::All || kind == k;
    let mut summary = serde_json::Map::new();
    if want(ScanKind::Resonance) {
        match resonance_scan(&op, ximax, cfg.resonance_tol, &cfg) {
            Ok(r) => {
                write_json(&dir, "resonance.json", &serde_json::to_value(&r).expect("scan serializes"))?;
                summary.insert("resonance".into(), json!({"count": r.resonant.len(), "infinite_trend": r.infinite_trend}));
            }
            Err(e) => {
                summary.insert("resonance".into(), json!({"error": e.to_string()}));
            }
        }
    }
    if want(ScanKind::Delta) {
        match delta_scan_fit(&op, ximax.min(4096), &cfg) {
            Ok(d) => {
                std::fs::write(dir.join("delta.csv"), d.to_csv())?;
                summary.insert("delta".into(), json!({"M_hat": d.m_hat, "C_hat": d.c_hat, "fit_residual": d.residual}));
            }
            Err(e) => {
                summary.insert("delta".into(), json!({"error": e.to_string()}));
            }
        }
    }
    if want(ScanKind::Sign) {
        let s = sign_stability_scan(&op, ximax, &cfg);
        let v = serde_json::to_value(&s).expect("scan serializes");
        write_json(&dir, "sign.json", &v)?;
        summary.insert("sign".into(), json!({"violations": s.violation_count, "scanned": s.scanned, "stable_from": s.stable_from}));
    }
    if want(ScanKind::Segment) {
        let s = segment_exponent_scan(&op, ximax, &cfg);
        let v = serde_json::to_value(&s).expect("scan serializes");
        let mut csv = String::from("shell,ratio,xi,exponent\n");
        for r in &s.shells {
            let xi: Vec<String> = r.2.iter().map(|x| x.to_string()).collect();
            csv.push_str(&format!("{},{:e},{},{:e}\n", r.0, r.1, xi.join(" "), r.3));
        }
        write_json(&dir, "segment.json", &v)?;
        std::fs::write(dir.join("segment.csv"), csv)?;
        summary.insert("segment".into(), json!({"growth": s.growth}));
    }
    if want(ScanKind::Growth) {
        let mut g = serde_json::Map::new();
        for (i, t) in op.terms.iter().enumerate() {
            let a = t.p.classify_growth(Part::Re, ximax, cfg.shell_samples, cfg.seed);
            let b = t.p.classify_growth(Part::Im, ximax, cfg.shell_samples, cfg.seed);
            g.insert(format!("term{i}"), json!({"alpha": a, "beta": b}));
        }
        let v = Value::Object(g);
        write_json(&dir, "growth.json", &v)?;
        summary.insert("growth".into(), v);
    }
    let summary = Value::Object(summary);
    if c.json {
        print_json(&summary);
    } else {
        for (k, v) in summary.as_object().unwrap() {
            println!("{k}: {v}");
        }
        println!("outputs: {}", dir.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("HYPOTORUS_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let r = match &cli.cmd {
        Cmd::Classify { spec, common } => cmd_classify(spec, common),
        Cmd::Solve { spec, source, common } => cmd_solve(spec, source, common),
        Cmd::Counterexample { spec, recipe, k, count, common } => cmd_counterexample(spec, *recipe, *k, *count, common),
        Cmd::Diophantine { constant, qmax, terms, common } => cmd_diophantine(constant, qmax.as_deref(), *terms, common),
        Cmd::Scan { spec, kind, common } => cmd_scan(spec, *kind, common),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
