//! Labeled square distance matrices and their CSV form.

use std::path::Path;

use crate::error::{Error, Result};

/// Symmetric, nonnegative `n x n` matrix with a zero diagonal, labeled by
/// stimulus id.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix and checks its invariants (exact symmetry, zero
    /// diagonal, finite nonnegative entries, unique ids).
    pub fn new(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let m = DistanceMatrix::unchecked(ids, values)?;
        m.validate()?;
        Ok(m)
    }

    fn unchecked(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(Error::invalid(format!(
                "{n} ids need {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let mut sorted: Vec<&String> = ids.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate id `{}`", w[0])));
        }
        Ok(DistanceMatrix { ids, values })
    }

    /// Fills the strict upper triangle from `f(i, j)` and mirrors it.
    pub fn from_fn(ids: Vec<String>, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = ids.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        DistanceMatrix::new(ids, values)
    }

    /// Builds from upper-triangle rows: `rows[i][k]` is entry `(i, i + 1 + k)`.
    pub fn from_upper_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        DistanceMatrix::from_fn(ids, |i, j| rows[i][j - i - 1])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::invalid(format!(
                    "diagonal entry {} is {}",
                    self.ids[i],
                    self.get(i, i)
                )));
            }
            for j in i + 1..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!(
                        "entry ({}, {}) = {v}",
                        self.ids[i], self.ids[j]
                    )));
                }
                if v != self.get(j, i) {
                    return Err(Error::invalid(format!(
                        "asymmetric at ({}, {})",
                        self.ids[i], self.ids[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Strict upper triangle in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }

    pub fn map_entries(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        DistanceMatrix::from_fn(self.ids.clone(), |i, j| f(self.get(i, j)))
    }

    /// Reorders rows and columns to follow `ids`.
    pub fn reorder(&self, ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if ids.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} ids, got {}",
                self.len(),
                ids.len()
            )));
        }
        let pos: Vec<usize> = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("unknown id `{id}`")))
            })
            .collect::<Result<_>>()?;
        DistanceMatrix::from_fn(ids.to_vec(), |i, j| self.get(pos[i], pos[j]))
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("id").chain(self.ids.iter().map(String::as_str));
        w.write_record(header).expect("in-memory write");
        let n = self.len();
        for i in 0..n {
            let mut row = vec![self.ids[i].clone()];
            row.extend((0..n).map(|j| format_f64(self.get(i, j))));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::invalid(format!("matrix CSV header: {e}")))?
            .clone();
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let n = ids.len();
        let mut values = Vec::with_capacity(n * n);
        for (row_idx, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::invalid(format!("matrix CSV row {row_idx}: {e}")))?;
            if rec.len() != n + 1 {
                return Err(Error::invalid(format!(
                    "matrix CSV row {row_idx} has {} cells, expected {}",
                    rec.len(),
                    n + 1
                )));
            }
            if row_idx >= n || rec[0] != ids[row_idx] {
                return Err(Error::invalid(format!(
                    "matrix CSV row {row_idx} id `{}` does not match header",
                    &rec[0]
                )));
            }
            for cell in rec.iter().skip(1) {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad number `{cell}`")))?;
                values.push(v);
            }
        }
        if values.len() != n * n {
            return Err(Error::invalid(format!(
                "matrix CSV has {} rows, expected {n}",
                values.len() / n.max(1)
            )));
        }
        DistanceMatrix::new(ids, values)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DistanceMatrix::from_csv_str(&text).map_err(|e| e.for_item(path.display().to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}
