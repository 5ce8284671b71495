//! Agreement between two flat clusterings.
//!
//! NMI and AMI normalize by the arithmetic mean of the two entropies. AMI
//! uses the expected mutual information under the permutation model.
//! Degenerate cases follow the common convention: two single-cluster
//! labelings, or two all-singleton labelings, score 1.

use serde::{Deserialize, Serialize};

use super::hac::ClusterLabels;
use crate::error::Result;

/// Contingency table between two labelings, with dense relabeled clusters.
struct Contingency {
    n: usize,
    table: Vec<Vec<u64>>,
    rows: Vec<u64>,
    cols: Vec<u64>,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn contingency(a: &ClusterLabels, b: &ClusterLabels) -> Result<Contingency> {
    let bl = a.aligned(b)?;
    let (ra, ka) = dense(&a.labels);
    let (rb, kb) = dense(&bl);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in ra.iter().zip(&rb) {
        table[i][j] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency {
        n: a.len(),
        table,
        rows,
        cols,
    })
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

impl Contingency {
    fn pair_sums(&self) -> (f64, f64, f64, f64) {
        let sum_ij: f64 = self.table.iter().flatten().map(|&v| comb2(v)).sum();
        let sum_a: f64 = self.rows.iter().map(|&v| comb2(v)).sum();
        let sum_b: f64 = self.cols.iter().map(|&v| comb2(v)).sum();
        (sum_ij, sum_a, sum_b, comb2(self.n as u64))
    }

    fn trivially_identical(&self) -> bool {
        let (ka, kb) = (self.rows.len(), self.cols.len());
        ka == kb && (ka <= 1 || ka == self.n)
    }

    fn entropy(counts: &[u64], n: f64) -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    }

    fn mutual_info(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.table.iter().enumerate() {
            for (j, &nij) in row.iter().enumerate() {
                if nij > 0 {
                    let nij = nij as f64;
                    mi += nij / n * (n * nij / (self.rows[i] as f64 * self.cols[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }

    /// `E[I]` under random permutations with fixed marginals.
    fn expected_mutual_info(&self) -> f64 {
        let n = self.n;
        let lf: Vec<f64> = std::iter::once(0.0)
            .chain((1..=n).scan(0.0, |acc, k| {
                *acc += (k as f64).ln();
                Some(*acc)
            }))
            .collect();
        let nf = n as f64;
        let mut emi = 0.0;
        for &a in &self.rows {
            for &b in &self.cols {
                let (a, b) = (a as usize, b as usize);
                let lo = (a + b).saturating_sub(n).max(1);
                let hi = a.min(b);
                for nij in lo..=hi {
                    let term = nij as f64 / nf * (nf * nij as f64 / (a as f64 * b as f64)).ln();
                    let log_p = lf[a] + lf[b] + lf[n - a] + lf[n - b]
                        - lf[n]
                        - lf[nij]
                        - lf[a - nij]
                        - lf[b - nij]
                        - lf[n + nij - a - b];
                    emi += term * log_p.exp();
                }
            }
        }
        emi
    }
}

/// Fraction of item pairs on which the labelings agree.
pub fn rand_index(a: &ClusterLabels, b: &ClusterLabels) -> Result<f64> {
    let c = contingency(a, b)?;
    let (sij, sa, sb, total) = c.pair_sums();
    if total == 0.0 {
        return Ok(1.0);
    }
    Ok((total + 2.0 * sij - sa - sb) / total)
}

pub fn adjusted_rand_index(a: &ClusterLabels, b: &ClusterLabels) -> Result<f64> {
    let c = contingency(a, b)?;
    if c.trivially_identical() {
        return Ok(1.0);
    }
    let (sij, sa, sb, total) = c.pair_sums();
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(if sij == expected { 1.0 } else { 0.0 });
    }
    Ok((sij - expected) / (max - expected))
}

pub fn normalized_mutual_info(a: &ClusterLabels, b: &ClusterLabels) -> Result<f64> {
    let c = contingency(a, b)?;
    if c.trivially_identical() {
        return Ok(1.0);
    }
    let mi = c.mutual_info();
    if mi == 0.0 {
        return Ok(0.0);
    }
    let n = c.n as f64;
    let norm = (Contingency::entropy(&c.rows, n) + Contingency::entropy(&c.cols, n)) / 2.0;
    Ok((mi / norm.max(f64::EPSILON)).min(1.0))
}

pub fn adjusted_mutual_info(a: &ClusterLabels, b: &ClusterLabels) -> Result<f64> {
    let c = contingency(a, b)?;
    if c.trivially_identical() {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let mi = c.mutual_info();
    let emi = c.expected_mutual_info();
    let norm = (Contingency::entropy(&c.rows, n) + Contingency::entropy(&c.cols, n)) / 2.0;
    let mut denom = norm - emi;
    denom = if denom < 0.0 {
        denom.min(-f64::EPSILON)
    } else {
        denom.max(f64::EPSILON)
    };
    Ok((mi - emi) / denom)
}

/// All four agreement measures for one pair of labelings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub ri: f64,
    pub ari: f64,
    pub nmi: f64,
    pub ami: f64,
}

impl ClusterScores {
    pub fn compute(a: &ClusterLabels, b: &ClusterLabels) -> Result<Self> {
        Ok(ClusterScores {
            ri: rand_index(a, b)?,
            ari: adjusted_rand_index(a, b)?,
            nmi: normalized_mutual_info(a, b)?,
            ami: adjusted_mutual_info(a, b)?,
        })
    }

    pub fn as_pairs(&self) -> [(&'static str, f64); 4] {
        [
            ("ri", self.ri),
            ("ari", self.ari),
            ("nmi", self.nmi),
            ("ami", self.ami),
        ]
    }
}
