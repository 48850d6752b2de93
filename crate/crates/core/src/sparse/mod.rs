//! Compressed sparse row matrices, dense vector helpers, norm estimation,
//! sparse Cholesky and MatrixMarket I/O.

mod cholesky;
mod mm;
mod norms;
pub mod vector;

pub use cholesky::{cg_solve, CgOutcome, Cholesky, ColumnFactor, FactorKeep, InverseOperator};
pub use mm::{read_matrix_market, read_vector, write_matrix_market, write_vector};
pub use norms::{
    a_norm, abs_norm2_estimate, inverse_norm_estimate, norm2_estimate, spectral_norm_estimate,
    NormEstimate, NormalOperator, PowerOptions, SymmetricOperator,
};

use crate::error::{Error, Result};

/// Dense vector; plain `Vec<f64>` with free functions in [`vector`].
pub type DenseVector = Vec<f64>;

/// Compressed sparse row matrix. Column indices are strictly increasing
/// inside each row; explicitly stored zeros are kept as part of the pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from raw CSR arrays after validating them.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn new_unchecked(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let m = CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        };
        debug_assert!(m.validate().is_ok());
        m
    }

    /// Check the CSR invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidStructure(msg));
        if self.row_ptr.len() != self.nrows + 1 {
            return bad(format!(
                "row_ptr has length {}, expected {}",
                self.row_ptr.len(),
                self.nrows + 1
            ));
        }
        if self.row_ptr[0] != 0 {
            return bad("row_ptr[0] must be 0".into());
        }
        if self.col_idx.len() != self.values.len() {
            return bad("col_idx and values differ in length".into());
        }
        if *self.row_ptr.last().unwrap() != self.col_idx.len() {
            return bad("row_ptr[nrows] must equal nnz".into());
        }
        for i in 0..self.nrows {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if a > b {
                return bad(format!("row_ptr decreases at row {i}"));
            }
            let cols = &self.col_idx[a..b];
            for (k, &c) in cols.iter().enumerate() {
                if c >= self.ncols {
                    return bad(format!("column {c} out of range in row {i}"));
                }
                if k > 0 && cols[k - 1] >= c {
                    return bad(format!("columns not strictly increasing in row {i}"));
                }
            }
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return bad(format!("non-finite value {v}"));
        }
        Ok(())
    }

    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidStructure(format!(
                    "entry ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new(nrows, ncols, row_ptr, col_idx, values)
    }

    /// Dense rows to CSR, keeping only nonzero entries.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged dense input");
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new_unchecked(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::new_unchecked(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::new_unchecked(nrows, ncols, vec![0; nrows + 1], Vec::new(), Vec::new())
    }

    pub fn diagonal_matrix(d: &[f64]) -> Self {
        let n = d.len();
        Self::new_unchecked(n, n, (0..=n).collect(), (0..n).collect(), d.to_vec())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Same pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.nnz());
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Stored value at (i, j), or 0.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).0.binary_search(&j).is_ok()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                col_idx[next[c]] = i;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        Self::new_unchecked(self.ncols, self.nrows, counts, col_idx, values)
    }

    /// Entrywise absolute value `|K|`.
    pub fn abs(&self) -> Self {
        self.map_values(f64::abs)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map_values(|v| alpha * v)
    }

    /// `y = K x` in plain double arithmetic.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "spmv: operand length");
        assert_eq!(y.len(), self.nrows, "spmv: output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c];
            }
            *yi = s;
        }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::dims("matmul", self.ncols, other.nrows));
        }
        let n = other.ncols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut pattern: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self::new_unchecked(self.nrows, n, row_ptr, col_idx, values))
    }

    /// `self + alpha * other` over the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Result<Self> {
        if self.nrows != other.nrows {
            return Err(Error::dims("add_scaled rows", self.nrows, other.nrows));
        }
        if self.ncols != other.ncols {
            return Err(Error::dims("add_scaled cols", self.ncols, other.ncols));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let a = ca.get(p).copied().unwrap_or(usize::MAX);
                let b = cb.get(q).copied().unwrap_or(usize::MAX);
                if a < b {
                    col_idx.push(a);
                    values.push(va[p]);
                    p += 1;
                } else if b < a {
                    col_idx.push(b);
                    values.push(alpha * vb[q]);
                    q += 1;
                } else {
                    col_idx.push(a);
                    values.push(va[p] + alpha * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self::new_unchecked(
            self.nrows, self.ncols, row_ptr, col_idx, values,
        ))
    }

    /// Galerkin triple product `Pᵀ K P`.
    pub fn galerkin(&self, p: &CsrMatrix) -> Result<Self> {
        p.transpose().matmul(&self.matmul(p)?)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `m_K`: the largest number of stored entries in a row.
    pub fn max_nnz_row(&self) -> usize {
        (0..self.nrows)
            .map(|i| self.row_ptr[i + 1] - self.row_ptr[i])
            .max()
            .unwrap_or(0)
    }

    pub fn max_nnz_col(&self) -> usize {
        let mut counts = vec![0usize; self.ncols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    /// `m̄_K`: the largest number of stored entries in a row or a column.
    pub fn max_nnz_row_or_col(&self) -> usize {
        self.max_nnz_row().max(self.max_nnz_col())
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.nrows).all(|i| self.row(i).0.last().map_or(true, |&c| c <= i))
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.nrows).all(|i| self.row(i).0.first().map_or(true, |&c| c >= i))
    }

    /// Pattern and value symmetry within `rel_tol` relative to the largest entry.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let t = self.transpose();
        if t.row_ptr != self.row_ptr || t.col_idx != self.col_idx {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.values
            .iter()
            .zip(&t.values)
            .all(|(a, b)| (a - b).abs() <= rel_tol * scale)
    }

    /// Lower triangle including the diagonal.
    pub fn lower_triangle(&self) -> Self {
        self.filter_pattern(|i, j, _| j <= i)
    }

    /// Keep entries for which `keep(row, col, value)` is true.
    pub fn filter_pattern(&self, keep: impl Fn(usize, usize, f64) -> bool) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if keep(i, c, v) {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new_unchecked(self.nrows, self.ncols, row_ptr, col_idx, values)
    }

    /// Symmetric permutation `Q K Qᵀ` with `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        assert!(self.is_square());
        let n = self.nrows;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for &old in perm {
            scratch.clear();
            let (cols, vals) = self.row(old);
            scratch.extend(cols.iter().zip(vals).map(|(&c, &v)| (inv[c], v)));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self::new_unchecked(n, n, row_ptr, col_idx, values)
    }

    /// Reverse Cuthill–McKee ordering of the symmetric pattern; `perm[new] = old`.
    pub fn rcm_ordering(&self) -> Vec<usize> {
        let n = self.nrows;
        let degree: Vec<usize> = (0..n)
            .map(|i| self.row(i).0.iter().filter(|&&c| c != i).count())
            .collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut by_degree: Vec<usize> = (0..n).collect();
        by_degree.sort_by_key(|&i| (degree[i], i));
        let mut nbrs: Vec<usize> = Vec::new();
        for &start in &by_degree {
            if visited[start] {
                continue;
            }
            let root = self.pseudo_peripheral(start, &degree);
            visited[root] = true;
            let begin = order.len();
            order.push(root);
            let mut head = begin;
            while head < order.len() {
                let v = order[head];
                head += 1;
                nbrs.clear();
                nbrs.extend(self.row(v).0.iter().copied().filter(|&c| !visited[c]));
                nbrs.sort_by_key(|&c| (degree[c], c));
                for &c in &nbrs {
                    visited[c] = true;
                    order.push(c);
                }
            }
        }
        order.reverse();
        order
    }

    fn bfs_levels(&self, root: usize, level: &mut [usize]) -> (usize, Vec<usize>) {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        level[root] = 0;
        let mut queue = vec![root];
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            for &c in self.row(v).0 {
                if level[c] == usize::MAX {
                    level[c] = level[v] + 1;
                    queue.push(c);
                }
            }
        }
        let depth = level[*queue.last().unwrap()];
        let last: Vec<usize> = queue.into_iter().filter(|&v| level[v] == depth).collect();
        (depth, last)
    }

    fn pseudo_peripheral(&self, start: usize, degree: &[usize]) -> usize {
        let mut level = vec![usize::MAX; self.nrows];
        let mut root = start;
        let (mut depth, mut last) = self.bfs_levels(root, &mut level);
        for _ in 0..8 {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (d, l) = self.bfs_levels(cand, &mut level);
            if d <= depth {
                break;
            }
            root = cand;
            depth = d;
            last = l;
        }
        root
    }
}
