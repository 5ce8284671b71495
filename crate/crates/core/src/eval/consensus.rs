//! Consensus distances from free-sorting groupings.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

/// One participant's sorting; a stimulus may sit in several groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingRecord {
    pub participant: String,
    pub groups: Vec<Vec<String>>,
}

/// Reads a JSON array of records, or a single record.
pub fn read_groupings(path: &Path) -> Result<Vec<GroupingRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let records = if parsed.is_array() {
        serde_json::from_value(parsed)
    } else {
        serde_json::from_value(parsed).map(|r| vec![r])
    };
    records.map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// `d_ij = (1/N) Σ_k (1 − c_ij / min(c_i, c_j))` where, for participant `k`,
/// `c_i` counts groups containing `i` and `c_ij` groups containing both.
///
/// Rows follow `ids`. Every participant must place every stimulus at least once.
pub fn consensus_matrix(ids: &[String], records: &[GroupingRecord]) -> Result<DistanceMatrix> {
    if records.is_empty() {
        return Err(Error::invalid(
            "consensus needs at least one grouping record",
        ));
    }
    let n = ids.len();
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut sum = vec![0.0f64; n * n];
    for rec in records {
        let mut member: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (g, group) in rec.groups.iter().enumerate() {
            for id in group {
                let &i = index.get(id.as_str()).ok_or_else(|| {
                    Error::invalid(format!(
                        "participant {} references unknown stimulus `{id}`",
                        rec.participant
                    ))
                })?;
                member[i].insert(g);
            }
        }
        if let Some(i) = member.iter().position(BTreeSet::is_empty) {
            return Err(Error::invalid(format!(
                "participant {} did not place stimulus `{}` in any group",
                rec.participant, ids[i]
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                let cij = member[i].intersection(&member[j]).count() as f64;
                let cmin = member[i].len().min(member[j].len()) as f64;
                sum[i * n + j] += 1.0 - cij / cmin;
            }
        }
    }
    let big_n = records.len() as f64;
    DistanceMatrix::from_fn(ids.to_vec(), |i, j| sum[i * n + j] / big_n)
}
