//! Machine-readable results documents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::BootstrapCi;
use crate::error::{Error, Result};

/// A point value or a bootstrap interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureValue {
    Value(f64),
    Interval(BootstrapCi),
}

impl From<f64> for MeasureValue {
    fn from(v: f64) -> Self {
        MeasureValue::Value(v)
    }
}

impl From<BootstrapCi> for MeasureValue {
    fn from(v: BootstrapCi) -> Self {
        MeasureValue::Interval(v)
    }
}

/// `{ "config": ..., "results": { name: value | {lo, mean, hi} } }`.
/// Keys are sorted, and nothing time-dependent is recorded.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsDoc {
    pub config: serde_json::Value,
    pub results: BTreeMap<String, MeasureValue>,
}

impl ResultsDoc {
    pub fn new(config: serde_json::Value) -> Self {
        ResultsDoc {
            config,
            results: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<MeasureValue>) {
        self.results.insert(name.into(), value.into());
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results are serializable");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_both_shapes() {
        let mut d = ResultsDoc::new(serde_json::json!({"seed": 1}));
        d.insert("ari", 0.5);
        d.insert(
            "ami",
            BootstrapCi {
                lo: 0.1,
                mean: 0.2,
                hi: 0.3,
            },
        );
        let back: ResultsDoc = serde_json::from_str(&d.to_json_string()).unwrap();
        assert_eq!(back, d);
        assert!(d.to_json_string().contains("\"lo\": 0.1"));
    }
}
