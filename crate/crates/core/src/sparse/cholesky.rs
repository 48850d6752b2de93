//! Left-looking column Cholesky with pluggable dropping, used both for the
//! complete sparse factorization and for incomplete variants.

use super::vector::{axpy, dot, norm2};
use super::{CsrMatrix, SymmetricOperator};
use crate::error::{Error, Result};

/// Which fill entries the column factorization keeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorKeep {
    /// Every entry: complete Cholesky.
    Complete,
    /// Only positions in the lower pattern of `A`.
    ZeroFill,
    /// Drop off-diagonal `L_ij` with `|L_ij| < dpt * sqrt(A_ii * A_jj)`.
    Threshold(f64),
    /// Drop off-diagonal `L_ij` with `|L_ij| < dpt * ‖A(j:n, j)‖₁`.
    ColumnNormThreshold(f64),
}

/// Lower-triangular factor `L` with `A ≈ L Lᵀ`, kept in both orientations.
#[derive(Clone, Debug)]
pub struct ColumnFactor {
    lower: CsrMatrix,
    upper: CsrMatrix,
}

const NIL: usize = usize::MAX;

impl ColumnFactor {
    /// Factor the symmetric matrix `a` column by column. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: &CsrMatrix, keep: FactorKeep) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims("cholesky", a.nrows(), a.ncols()));
        }
        if let FactorKeep::Threshold(dpt) | FactorKeep::ColumnNormThreshold(dpt) = keep {
            if !(dpt >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "drop tolerance must be nonnegative, got {dpt}"
                )));
            }
        }
        let n = a.nrows();
        let at = a.transpose();
        let diag = a.diagonal();
        let mut col_rows: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut col_vals: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut next = vec![0usize; n];
        let mut head = vec![NIL; n];
        let mut link = vec![NIL; n];
        let mut work = vec![0.0; n];
        let mut stamp = vec![NIL; n];
        let mut allowed = vec![NIL; n];
        let mut pattern: Vec<usize> = Vec::new();

        for j in 0..n {
            pattern.clear();
            let mut col_norm = 0.0;
            // column j of the lower triangle = row j of Aᵀ restricted to i >= j
            let (rows, vals) = at.row(j);
            for (&i, &v) in rows.iter().zip(vals) {
                if i < j {
                    continue;
                }
                col_norm += v.abs();
                allowed[i] = j;
                stamp[i] = j;
                work[i] = v;
                pattern.push(i);
            }
            if stamp[j] != j {
                stamp[j] = j;
                work[j] = 0.0;
                pattern.push(j);
            }

            let mut k = head[j];
            head[j] = NIL;
            while k != NIL {
                let after = link[k];
                let pos = next[k];
                let rows_k = &col_rows[k];
                let vals_k = &col_vals[k];
                let ljk = vals_k[pos];
                for p in pos..rows_k.len() {
                    let i = rows_k[p];
                    if stamp[i] != j {
                        if keep == FactorKeep::ZeroFill && allowed[i] != j {
                            continue;
                        }
                        stamp[i] = j;
                        work[i] = 0.0;
                        pattern.push(i);
                    }
                    work[i] -= vals_k[p] * ljk;
                }
                next[k] = pos + 1;
                if pos + 1 < rows_k.len() {
                    let r = rows_k[pos + 1];
                    link[k] = head[r];
                    head[r] = k;
                }
                k = after;
            }

            let d = work[j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Breakdown { row: j, pivot: d });
            }
            let ljj = d.sqrt();
            pattern.sort_unstable();
            let mut rows_j = Vec::with_capacity(pattern.len());
            let mut vals_j = Vec::with_capacity(pattern.len());
            rows_j.push(j);
            vals_j.push(ljj);
            for &i in pattern.iter().filter(|&&i| i != j) {
                let v = work[i] / ljj;
                let kept = match keep {
                    FactorKeep::Complete | FactorKeep::ZeroFill => true,
                    FactorKeep::Threshold(dpt) => v.abs() >= dpt * (diag[i] * diag[j]).sqrt(),
                    FactorKeep::ColumnNormThreshold(dpt) => v.abs() >= dpt * col_norm,
                };
                if kept {
                    rows_j.push(i);
                    vals_j.push(v);
                }
            }
            next[j] = 1;
            if rows_j.len() > 1 {
                let r = rows_j[1];
                link[j] = head[r];
                head[r] = j;
            }
            col_rows.push(rows_j);
            col_vals.push(vals_j);
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (r, v) in col_rows.into_iter().zip(col_vals) {
            col_idx.extend(r);
            values.extend(v);
            row_ptr.push(col_idx.len());
        }
        let upper = CsrMatrix::new_unchecked(n, n, row_ptr, col_idx, values);
        let lower = upper.transpose();
        Ok(ColumnFactor { lower, upper })
    }

    pub fn lower(&self) -> &CsrMatrix {
        &self.lower
    }

    /// `Lᵀ` stored row-wise (diagonal first in each row).
    pub fn upper(&self) -> &CsrMatrix {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solve `L y = b` in double precision, in place.
    pub fn forward_in_place(&self, x: &mut [f64]) {
        let l = &self.lower;
        for i in 0..l.nrows() {
            let (cols, vals) = l.row(i);
            let last = cols.len() - 1;
            let mut s = x[i];
            for k in 0..last {
                s -= vals[k] * x[cols[k]];
            }
            x[i] = s / vals[last];
        }
    }

    /// Solve `Lᵀ y = b` in double precision, in place.
    pub fn backward_in_place(&self, x: &mut [f64]) {
        let u = &self.upper;
        for i in (0..u.nrows()).rev() {
            let (cols, vals) = u.row(i);
            let mut s = x[i];
            for k in 1..cols.len() {
                s -= vals[k] * x[cols[k]];
            }
            x[i] = s / vals[0];
        }
    }

    /// `(L Lᵀ)^{-1} b` in double precision.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }
}

/// Complete sparse Cholesky on a reverse Cuthill–McKee reordering.
#[derive(Clone, Debug)]
pub struct Cholesky {
    perm: Vec<usize>,
    factor: ColumnFactor,
}

impl Cholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims("cholesky", a.nrows(), a.ncols()));
        }
        let perm = a.rcm_ordering();
        let pa = a.permute_symmetric(&perm);
        let factor = ColumnFactor::new(&pa, FactorKeep::Complete).map_err(|e| match e {
            Error::Breakdown { row, pivot } => Error::Breakdown {
                row: perm[row],
                pivot,
            },
            other => other,
        })?;
        Ok(Cholesky { perm, factor })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn factor_nnz(&self) -> usize {
        self.factor.lower.nnz()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim(), "cholesky solve: length mismatch");
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.factor.forward_in_place(&mut x);
        self.factor.backward_in_place(&mut x);
        let mut out = vec![0.0; x.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Unpreconditioned conjugate gradients from a zero initial guess, stopping
/// when the recursively updated relative residual drops to `tol`.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    if a.nrows() != b.len() {
        return Err(Error::dims("cg_solve", a.nrows(), b.len()));
    }
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < max_iter && rel > tol {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite(pap));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        iterations += 1;
        rel = rr.sqrt() / bnorm;
    }
    Ok(CgOutcome {
        x,
        iterations,
        rel_residual: rel,
        converged: rel <= tol,
    })
}

/// Application of `A^{-1}`: sparse Cholesky up to 50,000 unknowns, CG with
/// relative tolerance 1e-8 beyond.
pub enum InverseOperator<'a> {
    Direct(Cholesky),
    Iterative {
        a: &'a CsrMatrix,
        tol: f64,
        max_iter: usize,
    },
}

impl<'a> InverseOperator<'a> {
    pub const DIRECT_LIMIT: usize = 50_000;

    pub fn new(a: &'a CsrMatrix) -> Result<Self> {
        if a.nrows() <= Self::DIRECT_LIMIT {
            Ok(InverseOperator::Direct(Cholesky::new(a)?))
        } else {
            Ok(InverseOperator::Iterative {
                a,
                tol: 1e-8,
                max_iter: 20 * a.nrows(),
            })
        }
    }
}

impl SymmetricOperator for InverseOperator<'_> {
    fn dim(&self) -> usize {
        match self {
            InverseOperator::Direct(c) => c.dim(),
            InverseOperator::Iterative { a, .. } => a.nrows(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            InverseOperator::Direct(c) => y.copy_from_slice(&c.solve(x)),
            InverseOperator::Iterative { a, tol, max_iter } => {
                let out = cg_solve(a, x, *tol, *max_iter).expect("CG on an SPD operator");
                y.copy_from_slice(&out.x);
            }
        }
    }
}
