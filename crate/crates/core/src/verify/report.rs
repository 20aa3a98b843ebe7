use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sq_core::LedgerSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// Pass iff `statistic <= threshold`.
    AtMost,
    /// Pass iff `statistic >= threshold`.
    AtLeast,
    /// Pass iff `statistic > threshold`.
    Above,
}

impl Comparison {
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
            Comparison::Above => statistic > threshold,
        }
    }
}

/// Outcome of one verification check.
///
/// `passed` is always `comparison.holds(statistic, threshold)`; flags carry
/// observations that do not affect it (skipped indices, vacuous bounds,
/// unmet preconditions). Wall time is kept out of the serialized form so
/// reports replay byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub test_id: String,
    pub seeds: Vec<u64>,
    pub statistic: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
    pub flags: Vec<String>,
    pub details: BTreeMap<String, f64>,
    pub ledger: Option<LedgerSnapshot>,
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl TrialReport {
    pub fn new(test_id: impl Into<String>, seeds: Vec<u64>, statistic: f64, comparison: Comparison, threshold: f64) -> Self {
        TrialReport {
            test_id: test_id.into(),
            seeds,
            statistic,
            comparison,
            threshold,
            passed: comparison.holds(statistic, threshold),
            flags: Vec::new(),
            details: BTreeMap::new(),
            ledger: None,
            runtime_secs: 0.0,
        }
    }

    pub fn detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    pub fn flag(mut self, note: impl Into<String>) -> Self {
        self.flags.push(note.into());
        self
    }

    pub fn with_ledger(mut self, ledger: LedgerSnapshot) -> Self {
        self.ledger = Some(ledger);
        self
    }

    pub fn timed(mut self, started: std::time::Instant) -> Self {
        self.runtime_secs = started.elapsed().as_secs_f64();
        self
    }

    /// Whether `passed` agrees with the statistic and threshold.
    pub fn is_consistent(&self) -> bool {
        self.passed == self.comparison.holds(self.statistic, self.threshold)
    }

    /// One summary line.
    pub fn line(&self) -> String {
        let op = match self.comparison {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
            Comparison::Above => ">",
        };
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("{verdict} {}: {:.6e} {op} {:.6e}", self.test_id, self.statistic, self.threshold);
        if !self.flags.is_empty() {
            s.push_str(&format!(" [{} flagged]", self.flags.len()));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_comparison() {
        assert!(TrialReport::new("a", vec![], 1.0, Comparison::AtMost, 1.0).passed);
        assert!(!TrialReport::new("a", vec![], 1.0, Comparison::Above, 1.0).passed);
        assert!(TrialReport::new("a", vec![], 2.0, Comparison::AtLeast, 1.0).passed);
        assert!(!TrialReport::new("a", vec![], f64::NAN, Comparison::AtMost, 1.0).passed);
    }

    #[test]
    fn runtime_is_not_serialized() {
        let mut r = TrialReport::new("a", vec![1], 0.5, Comparison::AtMost, 1.0).detail("k", 2.0);
        r.runtime_secs = 3.0;
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("runtime"));
        let back: TrialReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.details["k"], 2.0);
        assert!(back.is_consistent());
    }
}
