//! Decision outcomes with a rule trace.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "GH")]
    Gh,
    #[serde(rename = "NOT_GH")]
    NotGh,
    #[serde(rename = "UNDECIDED")]
    Undecided,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Gh => 0,
            Status::NotGh => 10,
            Status::Undecided => 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    Exact,
    Structural,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub id: String,
    pub anchor: String,
    pub outcome: Status,
    pub evidence: EvidenceKind,
    pub detail: Value,
    /// Finite range the evidence was gathered on; required for numeric evidence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub suspect: bool,
    pub rules: Vec<RuleEntry>,
    pub certificates: Vec<Value>,
    pub diagnostics: Vec<String>,
}

impl Verdict {
    pub fn new(status: Status) -> Self {
        Verdict { status, suspect: false, rules: vec![], certificates: vec![], diagnostics: vec![] }
    }

    pub fn undecided(diagnostics: Vec<String>) -> Self {
        Verdict { diagnostics, ..Verdict::new(Status::Undecided) }
    }

    pub fn with_rule(mut self, r: RuleEntry) -> Self {
        self.rules.push(r);
        self
    }

    pub fn is_numeric(&self) -> bool {
        self.rules.iter().any(|r| r.evidence == EvidenceKind::Numeric)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("verdict serializes")
    }
}

pub fn rule(id: &str, anchor: &str, outcome: Status, evidence: EvidenceKind, detail: Value, scope: Option<Value>) -> RuleEntry {
    debug_assert!(evidence != EvidenceKind::Numeric || scope.is_some());
    RuleEntry { id: id.into(), anchor: anchor.into(), outcome, evidence, detail, scope }
}
