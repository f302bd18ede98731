//! Machine-readable records of identity and inequality checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::report::num;

/// Smallest denominator used for relative residuals.
pub const RELATIVE_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity_id: String,
    pub indices: BTreeMap<String, i64>,
    #[serde(with = "num")]
    pub lhs: f64,
    #[serde(with = "num")]
    pub rhs: f64,
    #[serde(with = "num")]
    pub abs_residual: f64,
    #[serde(with = "num")]
    pub rel_residual: f64,
    #[serde(with = "num")]
    pub tolerance: f64,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl IdentityReport {
    /// `lhs == rhs` to relative tolerance `tol`.
    pub fn equality(id: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let abs = (lhs - rhs).abs();
        let rel = relative_residual(lhs, rhs);
        let verdict = if rel <= tol { Verdict::Pass } else { Verdict::Fail };
        IdentityReport {
            identity_id: id.to_string(),
            indices: BTreeMap::new(),
            lhs,
            rhs,
            abs_residual: abs,
            rel_residual: rel,
            tolerance: tol,
            verdict,
            notes: Vec::new(),
        }
    }

    /// `lhs > rhs` with margin: passes iff `lhs - rhs > tol * scale`.
    /// The residual fields hold the signed margin `lhs - rhs` and its ratio to `scale`.
    pub fn strict_greater(id: &str, lhs: f64, rhs: f64, scale: f64, tol: f64) -> Self {
        let margin = lhs - rhs;
        let scale = scale.abs().max(RELATIVE_FLOOR);
        let verdict = if margin > tol * scale { Verdict::Pass } else { Verdict::Fail };
        IdentityReport {
            identity_id: id.to_string(),
            indices: BTreeMap::new(),
            lhs,
            rhs,
            abs_residual: margin,
            rel_residual: margin / scale,
            tolerance: tol,
            verdict,
            notes: Vec::new(),
        }
    }

    /// A nonnegative defect that must stay below `tol`; the defect is both residuals.
    pub fn bounded(id: &str, defect: f64, tol: f64) -> Self {
        let verdict = if defect <= tol { Verdict::Pass } else { Verdict::Fail };
        IdentityReport {
            identity_id: id.to_string(),
            indices: BTreeMap::new(),
            lhs: defect,
            rhs: 0.0,
            abs_residual: defect,
            rel_residual: defect,
            tolerance: tol,
            verdict,
            notes: Vec::new(),
        }
    }

    pub fn not_applicable(id: &str, reason: impl Into<String>) -> Self {
        IdentityReport {
            identity_id: id.to_string(),
            indices: BTreeMap::new(),
            lhs: 0.0,
            rhs: 0.0,
            abs_residual: 0.0,
            rel_residual: 0.0,
            tolerance: 0.0,
            verdict: Verdict::NotApplicable,
            notes: vec![reason.into()],
        }
    }

    pub fn with_index(mut self, name: &str, value: i64) -> Self {
        self.indices.insert(name.to_string(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Downgrades a pass to a fail; never the other way round.
    pub fn fail_if(mut self, condition: bool, note: impl Into<String>) -> Self {
        if condition && self.verdict == Verdict::Pass {
            self.verdict = Verdict::Fail;
            self.notes.push(note.into());
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

pub fn relative_residual(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(RELATIVE_FLOOR)
}

/// Pass unless some report failed; not-applicable reports are neutral.
pub fn rollup<'a>(reports: impl IntoIterator<Item = &'a IdentityReport>) -> bool {
    reports.into_iter().all(|r| r.verdict != Verdict::Fail)
}
