//! Agglomerative clustering with Ward linkage, and flat cuts of the tree.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

/// Ward variant: `D2` runs the Lance–Williams update on squared distances
/// and reports heights as their square roots; `D1` updates raw distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    D2,
    D1,
}

impl std::str::FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d2" | "ward.d2" => Ok(Linkage::D2),
            "d1" | "ward.d" => Ok(Linkage::D1),
            other => Err(Error::invalid(format!(
                "unknown Ward variant `{other}` (expected d2 or d1)"
            ))),
        }
    }
}

/// One agglomeration. Leaves are clusters `0..n`; merge `s` creates cluster `n + s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub ids: Vec<String>,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
}

impl Dendrogram {
    pub fn leaves(&self) -> usize {
        self.ids.len()
    }
}

pub fn hac_ward(matrix: &DistanceMatrix) -> Result<Dendrogram> {
    hac(matrix, Linkage::D2)
}

/// Ward agglomeration in `O(n³)`. Among equal merge costs the pair with the
/// lexicographically smallest `(slot, slot)` wins, where a merged cluster
/// occupies the smaller slot of its two parts.
pub fn hac(matrix: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "clustering needs at least 2 items, got {n}"
        )));
    }
    let mut d: Vec<f64> = matrix
        .values()
        .iter()
        .map(|&v| match linkage {
            Linkage::D2 => v * v,
            Linkage::D1 => v,
        })
        .collect();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let v = d[i * n + j];
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let (cost, i, j) = best.expect("two active clusters remain");
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let nk = size[k] as f64;
            let v =
                ((ni + nk) * d[k * n + i] + (nj + nk) * d[k * n + j] - nk * cost) / (ni + nj + nk);
            d[k * n + i] = v;
            d[i * n + k] = v;
        }
        let (a, b) = (
            cluster_id[i].min(cluster_id[j]),
            cluster_id[i].max(cluster_id[j]),
        );
        let height = match linkage {
            Linkage::D2 => cost.max(0.0).sqrt(),
            Linkage::D1 => cost,
        };
        size[i] += size[j];
        active[j] = false;
        cluster_id[i] = n + step;
        merges.push(Merge {
            left: a,
            right: b,
            height,
            size: size[i],
        });
    }
    Ok(Dendrogram {
        ids: matrix.ids().to_vec(),
        merges,
        linkage,
    })
}

/// Flat labeling of items by stimulus id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabels {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
}

impl ClusterLabels {
    pub fn new(ids: Vec<String>, labels: Vec<usize>) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} ids but {} labels",
                ids.len(),
                labels.len()
            )));
        }
        Ok(ClusterLabels { ids, labels })
    }

    pub fn from_labels(labels: Vec<usize>) -> Self {
        let ids = (0..labels.len()).map(|i| i.to_string()).collect();
        ClusterLabels { ids, labels }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        let mut v = self.labels.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    /// Labels of `other` in this labeling's id order.
    pub fn aligned(&self, other: &ClusterLabels) -> Result<Vec<usize>> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "labelings cover {} and {} items",
                self.len(),
                other.len()
            )));
        }
        let index: HashMap<&str, usize> = other
            .ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        self.ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| other.labels[i])
                    .ok_or_else(|| {
                        Error::invalid(format!("id `{id}` missing from the second labeling"))
                    })
            })
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "label"]).expect("in-memory write");
        for (id, l) in self.ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &l.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let (mut ids, mut labels) = (Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::invalid(format!("labels CSV row {row}: {e}")))?;
            if rec.len() != 2 {
                return Err(Error::invalid(format!(
                    "labels CSV row {row} needs 2 cells"
                )));
            }
            ids.push(rec[0].to_string());
            labels.push(
                rec[1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad label `{}`", &rec[1])))?,
            );
        }
        ClusterLabels::new(ids, labels)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ClusterLabels::from_csv_str(&text).map_err(|e| e.for_item(path.display().to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Undoes the last `k − 1` merges. Cluster labels are numbered by the
/// position of each cluster's first member.
pub fn cut_k(tree: &Dendrogram, k: usize) -> Result<ClusterLabels> {
    let n = tree.leaves();
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} is outside 1..={n}")));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (s, m) in tree.merges.iter().take(n - k).enumerate() {
        parent[m.left] = n + s;
        parent[m.right] = n + s;
    }
    let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = relabel.len();
        labels.push(*relabel.entry(root).or_insert(next));
    }
    ClusterLabels::new(tree.ids.clone(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DistanceMatrix {
        let ids = (0..points.len()).map(|i| format!("p{i}")).collect();
        DistanceMatrix::from_fn(ids, |i, j| (points[i] - points[j]).abs()).unwrap()
    }

    #[test]
    fn two_points_merge_at_distance() {
        let t = hac_ward(&line(&[0.0, 3.0])).unwrap();
        assert_eq!(
            t.merges,
            vec![Merge {
                left: 0,
                right: 1,
                height: 3.0,
                size: 2
            }]
        );
    }

    #[test]
    fn collinear_nearest_first() {
        let t = hac_ward(&line(&[0.0, 1.0, 10.0])).unwrap();
        assert_eq!((t.merges[0].left, t.merges[0].right), (0, 1));
        assert_eq!((t.merges[1].left, t.merges[1].right), (2, 3));
        // Ward.D2 height for {0,1} vs {10}: sqrt(2·1·2/3)·|9.5| = 10.969...
        assert!((t.merges[1].height - (4.0f64 / 3.0).sqrt() * 9.5).abs() < 1e-12);
    }

    #[test]
    fn cuts() {
        let t = hac_ward(&line(&[0.0, 1.0, 10.0, 11.0, 30.0])).unwrap();
        assert_eq!(cut_k(&t, 5).unwrap().labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(cut_k(&t, 1).unwrap().labels, vec![0; 5]);
        assert_eq!(cut_k(&t, 3).unwrap().labels, vec![0, 0, 1, 1, 2]);
        assert!(cut_k(&t, 0).is_err() && cut_k(&t, 6).is_err());
    }

    #[test]
    fn ties_break_on_lowest_pair() {
        let t = hac_ward(&line(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!((t.merges[0].left, t.merges[0].right), (0, 1));
    }

    #[test]
    fn labels_csv_round_trip() {
        let l = ClusterLabels::new(vec!["a,b".into(), "c".into()], vec![1, 0]).unwrap();
        assert_eq!(ClusterLabels::from_csv_str(&l.to_csv_string()).unwrap(), l);
    }
}
