//! Structured experiment records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub family_hash: Option<String>,
    pub n: Option<usize>,
    pub m: Option<u32>,
    pub presets: BTreeMap<String, String>,
}

/// One inequality or property evaluated over a set of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Hard checks decide the exit status; soft ones are informational.
    pub hard: bool,
    pub trials: u64,
    pub violations: u64,
    /// Largest attained `lhs / rhs` (or the check's own figure of merit).
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub id: String,
    pub provenance: Provenance,
    pub metrics: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub table: Table,
    pub notes: Vec<String>,
    /// Wall-clock stamp; the only field allowed to differ between reruns.
    pub timestamp: Option<String>,
}

/// Running tally for a [`Check`].
#[derive(Clone, Debug)]
pub struct Tally {
    name: String,
    hard: bool,
    trials: u64,
    violations: u64,
    worst: f64,
}

impl Tally {
    pub fn hard(name: &str) -> Self {
        Tally { name: name.to_string(), hard: true, trials: 0, violations: 0, worst: f64::NEG_INFINITY }
    }

    pub fn soft(name: &str) -> Self {
        Tally { hard: false, ..Self::hard(name) }
    }

    /// Records one trial with figure of merit `ratio` and outcome `ok`.
    pub fn record(&mut self, ratio: f64, ok: bool) {
        self.trials += 1;
        if !ok {
            self.violations += 1;
        }
        if ratio > self.worst || ratio.is_nan() {
            self.worst = ratio;
        }
    }

    /// Records `lhs <= rhs * (1 + rel) + abs`.
    pub fn leq(&mut self, lhs: f64, rhs: f64, rel: f64, abs: f64) {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        self.record(ratio, lhs <= rhs * (1.0 + rel) + abs);
    }

    pub fn merge(&mut self, other: &Tally) {
        self.trials += other.trials;
        self.violations += other.violations;
        if other.worst > self.worst || other.worst.is_nan() {
            self.worst = other.worst;
        }
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn finish(&self) -> Check {
        Check {
            name: self.name.clone(),
            passed: self.violations == 0,
            hard: self.hard,
            trials: self.trials,
            violations: self.violations,
            worst_ratio: if self.trials == 0 { 0.0 } else { self.worst },
        }
    }
}

impl ProbeReport {
    pub fn new(id: &str) -> Self {
        ProbeReport { id: id.to_string(), ..Default::default() }
    }

    pub fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn label(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.labels.insert(key.to_string(), value.into());
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn push_check(&mut self, tally: &Tally) -> &mut Self {
        self.checks.push(tally.finish());
        self
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn columns(&mut self, cols: &[&str]) -> &mut Self {
        self.table.columns = cols.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn row(&mut self, values: Vec<Value>) -> &mut Self {
        debug_assert_eq!(values.len(), self.table.columns.len());
        self.table.rows.push(values);
        self
    }

    /// True when every hard check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.hard)
    }

    /// `id/check` for every failed hard check.
    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| c.hard && !c.passed).map(|c| format!("{}/{}", self.id, c.name)).collect()
    }

    /// Canonical JSON with the timestamp removed.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.timestamp = None;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

/// Hex SHA-256 of the JSON encoding of `items`; used to pin the cube family
/// or input set a supremum surrogate was taken over.
pub fn family_hash<T: Serialize + ?Sized>(items: &T) -> String {
    let bytes = serde_json::to_vec(items).expect("family serializes");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_counts_violations() {
        let mut t = Tally::hard("x");
        t.leq(1.0, 2.0, 0.0, 0.0);
        t.leq(3.0, 2.0, 0.0, 0.0);
        let c = t.finish();
        assert_eq!((c.trials, c.violations, c.passed), (2, 1, false));
        assert_eq!(c.worst_ratio, 1.5);
    }

    #[test]
    fn canonical_json_ignores_timestamp() {
        let mut a = ProbeReport::new("r");
        a.metric("v", 1.0);
        let mut b = a.clone();
        a.timestamp = Some("1".into());
        b.timestamp = Some("2".into());
        assert_eq!(a.canonical_json(), b.canonical_json());
        assert_ne!(family_hash(&[1, 2]), family_hash(&[2, 1]));
    }
}
