use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Outcome of one executable check.
///
/// `preconditions_ok = false` means the check did not apply; `pass` is then
/// meaningless and the run must not be counted as a bound violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    /// The claim being checked, in words.
    #[serde(rename = "paper_ref")]
    pub claim: String,
    pub pass: bool,
    /// Signed slack of the tightest instance; negative means violated.
    pub margin: Option<f64>,
    pub preconditions_ok: bool,
    pub details: Value,
}

impl Verdict {
    pub fn checked(check: &str, claim: &str, pass: bool, margin: f64, details: Value) -> Self {
        Self {
            check: check.into(),
            claim: claim.into(),
            pass,
            margin: Some(margin),
            preconditions_ok: true,
            details,
        }
    }

    /// The check's preconditions did not hold; `reason` says which.
    pub fn skipped(check: &str, claim: &str, reason: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            claim: claim.into(),
            pass: false,
            margin: None,
            preconditions_ok: false,
            details: serde_json::json!({ "outcome": "precondition-failed", "reason": reason.into() }),
        }
    }

    /// The check does not apply to this instance at all (e.g. a bound that divides by Φ = 0).
    pub fn not_applicable(check: &str, claim: &str, reason: impl Into<String>) -> Self {
        let mut v = Self::skipped(check, claim, reason);
        v.details["outcome"] = "not-applicable".into();
        v
    }

    pub fn is_violation(&self) -> bool {
        self.preconditions_ok && !self.pass
    }
}
