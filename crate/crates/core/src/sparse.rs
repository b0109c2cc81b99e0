//! Compressed sparse row matrices built from exact triplets.

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Anything that can apply a symmetric matrix to a vector.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Square sparse matrix; entries sorted by (row, col), no duplicates, no explicit zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    pub fn zero(dim: usize) -> Self {
        SparseOperator { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    /// Sums duplicates and drops exact zeros.
    pub fn from_triplets(dim: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        let mut i = 0;
        while i < t.len() {
            let (r, c, mut v) = t[i];
            assert!(r < dim && c < dim, "index ({r}, {c}) out of range for dim {dim}");
            let mut j = i + 1;
            while j < t.len() && t[j].0 == r && t[j].1 == c {
                v += t[j].2;
                j += 1;
            }
            if v != 0.0 {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
            i = j;
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator { dim, row_ptr, cols, vals }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    /// (row, col, value) in sorted order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&c) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.dim, self.entries().map(|(r, c, v)| (c, r, v)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.dim);
        }
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// a·self + b·other.
    pub fn axpby(&self, a: f64, other: &SparseOperator, b: f64) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t: Vec<(usize, usize, f64)> = self.entries().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(other.entries().map(|(r, c, v)| (r, c, b * v)));
        Self::from_triplets(self.dim, t)
    }

    pub fn add(&self, other: &SparseOperator) -> Self {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &SparseOperator) -> Self {
        self.axpby(1.0, other, -1.0)
    }

    /// self · other.
    pub fn matmul(&self, other: &SparseOperator) -> Self {
        assert_eq!(self.dim, other.dim);
        let dim = self.dim;
        let rows: Vec<Vec<(usize, f64)>> = (0..dim)
            .into_par_iter()
            .map_init(
                || (vec![0.0f64; dim], vec![false; dim], Vec::new()),
                |(acc, seen, touched), r| {
                    touched.clear();
                    for (k, a) in self.row(r) {
                        for (c, b) in other.row(k) {
                            if !seen[c] {
                                seen[c] = true;
                                touched.push(c);
                            }
                            acc[c] += a * b;
                        }
                    }
                    touched.sort_unstable();
                    let mut out = Vec::with_capacity(touched.len());
                    for &c in touched.iter() {
                        if acc[c] != 0.0 {
                            out.push((c, acc[c]));
                        }
                        acc[c] = 0.0;
                        seen[c] = false;
                    }
                    out
                },
            )
            .collect();
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (r, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr[r + 1] = cols.len();
        }
        SparseOperator { dim, row_ptr, cols, vals }
    }

    /// [self, other] = self·other − other·self.
    pub fn commutator(&self, other: &SparseOperator) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        LinOp::apply(self, x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        self.sub(other).max_abs()
    }

    /// max |A − Aᵀ|.
    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    /// Leading principal block of size k.
    pub fn principal_block(&self, k: usize) -> Self {
        let t = self.entries().filter(|&(r, c, _)| r < k && c < k).collect();
        Self::from_triplets(k, t)
    }

    /// ⟨x, A x⟩.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let y = self.matvec(x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }
}

impl LinOp for SparseOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(r, yr)| {
            let mut s = 0.0;
            for (c, v) in self.row(r) {
                s += v * x[c];
            }
            *yr = s;
        });
    }
}

impl LinOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        for (r, yr) in y.iter_mut().enumerate().take(n) {
            let mut s = 0.0;
            for (c, xc) in x.iter().enumerate() {
                s += self[(r, c)] * xc;
            }
            *yr = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseOperator {
        SparseOperator::from_triplets(3, vec![(0, 1, 2.0), (2, 0, -1.0), (0, 1, 1.0), (1, 1, 0.0), (1, 2, 4.0)])
    }

    #[test]
    fn triplets_merge_and_drop_zeros() {
        let a = sample();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        let e: Vec<_> = a.entries().collect();
        assert_eq!(e, vec![(0, 1, 3.0), (1, 2, 4.0), (2, 0, -1.0)]);
    }

    #[test]
    fn products_match_dense() {
        let a = sample();
        let b = a.transpose().add(&SparseOperator::identity(3));
        let p = a.matmul(&b).to_dense();
        let q = a.to_dense() * b.to_dense();
        assert_eq!(p, q);
        let x = [1.0, -2.0, 0.5];
        let y = a.matvec(&x);
        let z = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        assert_eq!(y, z.as_slice());
        assert_eq!(SparseOperator::from_dense(&a.to_dense()), a);
    }

    #[test]
    fn commutator_of_self_vanishes() {
        let a = sample();
        assert_eq!(a.commutator(&a).nnz(), 0);
    }
}
