use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("parse error at {line}:{column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("expression undefined at {0}")]
    EvalDomain(String),
    #[error("precision exhausted after {certified} certified terms")]
    PrecisionExhausted { certified: usize },
    #[error("factorization input exceeds 2^64: {0}")]
    FactorizationTooLarge(String),
    #[error("resonant mode xi={xi:?}: dist(M0, Z) = {dist:e}")]
    ResonantMode { xi: Vec<i64>, dist: f64 },
    #[error("resonant modes present, first at xi={0:?}")]
    ResonantModes(Vec<i64>),
    #[error("both solution formulas exceed the exponent budget at xi={xi:?} (exponent {exponent:.1})")]
    OverflowUnresolvable { xi: Vec<i64>, exponent: f64 },
    #[error("shooting system ill conditioned: |1 - exp(-2 pi i M0)| = {0:e}")]
    IllConditioned(f64),
    #[error("growth hypothesis violated: {0}")]
    GrowthHypothesisViolated(String),
    #[error("no witnesses for the super-logarithmic filter")]
    NoWitnesses,
    #[error("only {found} resonant modes found, {wanted} wanted")]
    NotEnoughResonances { found: usize, wanted: usize },
    #[error("hypotheses unmet: {0}")]
    HypothesesUnmet(String),
    #[error("no bad sequence within |xi| <= {0}")]
    NoBadSequence(u64),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
