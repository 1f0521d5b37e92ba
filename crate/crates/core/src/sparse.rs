//! Coordinate-list sparse matrices in canonical (row, col) order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square or rectangular sparse matrix. Entries are sorted by `(row, col)`,
/// unique, and explicit zeros are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct CooMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    row_start: Vec<usize>,
}

impl CooMatrix {
    /// Builds from unsorted triplets; duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::argument(format!(
                "entry ({r}, {c}) outside a {rows}x{cols} matrix"
            )));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        Ok(Self::from_sorted(rows, cols, entries))
    }

    fn from_sorted(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        let mut row_start = vec![0; rows + 1];
        for &(r, _, _) in &entries {
            row_start[r + 1] += 1;
        }
        for i in 0..rows {
            row_start[i + 1] += row_start[i];
        }
        Self { rows, cols, entries, row_start }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row_entries(&self, r: usize) -> &[(usize, usize, f64)] {
        &self.entries[self.row_start[r]..self.row_start[r + 1]]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row_entries(r)
            .binary_search_by(|e| e.1.cmp(&c))
            .map(|i| self.row_entries(r)[i].2)
            .unwrap_or(0.0)
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row_entries(r).iter().map(|e| e.2).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && self
                .entries
                .iter()
                .all(|&(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for &(r, c, v) in &self.entries {
            out[r * self.cols + c] = v;
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row_entries(r).iter().map(|&(_, c, v)| v * x[c]).sum();
        }
        y
    }

    /// `self · x` for a dense `cols × f` signal.
    pub fn mul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.cols {
            return Err(Error::argument(format!(
                "sparse {}x{} times dense {:?}",
                self.rows,
                self.cols,
                x.shape()
            )));
        }
        let f = x.cols();
        let mut out = Tensor::zeros(&[self.rows, f]);
        for r in 0..self.rows {
            let orow = out.row_mut(r);
            for &(_, c, v) in self.row_entries(r) {
                for (o, xv) in orow.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// `alpha·self + beta·I` for square matrices.
    pub fn scaled_shifted(&self, alpha: f64, beta: f64) -> Self {
        let mut trip: Vec<(usize, usize, f64)> =
            self.entries.iter().map(|&(r, c, v)| (r, c, alpha * v)).collect();
        trip.extend((0..self.rows.min(self.cols)).map(|i| (i, i, beta)));
        Self::from_triplets(self.rows, self.cols, trip).expect("indices already validated")
    }
}
