//! Incomplete Cholesky factors and the mixed-precision smoother built on
//! them: the factor is computed in double, stored in `ε^R` and applied by
//! forward and backward substitution in `ε^S`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fparith::{round_matrix, PrecisionSpec, Rounder};
use crate::hierarchy::scale_rhs;
use crate::sparse::{vector, Cholesky, ColumnFactor, CsrMatrix, FactorKeep, NormEstimate, PowerOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum IcVariant {
    /// Zero fill-in.
    Ic0,
    /// Threshold dropping with local tolerance `dpt`.
    Ict {
        dpt: f64,
        #[serde(default)]
        rule: DropRule,
    },
}

impl IcVariant {
    /// Threshold variant with the default drop rule.
    pub fn ict(dpt: f64) -> Self {
        IcVariant::Ict {
            dpt,
            rule: DropRule::default(),
        }
    }
}

impl std::fmt::Display for IcVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IcVariant::Ic0 => write!(f, "IC(0)"),
            IcVariant::Ict {
                dpt,
                rule: DropRule::ColumnNorm,
            } => write!(f, "ICT(dpt={dpt:e})"),
            IcVariant::Ict {
                dpt,
                rule: DropRule::DiagonalScaled,
            } => write!(f, "ICT(dpt={dpt:e}, diagonal-scaled)"),
        }
    }
}

/// Local drop criterion of the threshold factorization. The diagonal of `L`
/// is always kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropRule {
    /// Drop `L_ij` when `|L_ij| < dpt * ‖A(j:n, j)‖₁`.
    #[default]
    ColumnNorm,
    /// Drop `L_ij` when `|L_ij| < dpt * sqrt(A_ii A_jj)`.
    DiagonalScaled,
}

impl std::str::FromStr for DropRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "column-norm" => Ok(DropRule::ColumnNorm),
            "diagonal-scaled" => Ok(DropRule::DiagonalScaled),
            other => Err(Error::InvalidArgument(format!("unknown drop rule {other:?}"))),
        }
    }
}

/// Which triangle of the system a substitution solves with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// `T x = b` with `T` lower triangular (forward substitution).
    Lower,
    /// `Tᵀ x = b` with `T` lower triangular (backward substitution).
    UpperTransposed,
}

/// Lower-triangular factor `L ≈ chol(A)` with its storage and solve precisions.
#[derive(Clone, Debug)]
pub struct IcFactor {
    l: Arc<CsrMatrix>,
    lt: Arc<CsrMatrix>,
    l_stored: Arc<CsrMatrix>,
    lt_stored: Arc<CsrMatrix>,
    store: PrecisionSpec,
    solve: PrecisionSpec,
    variant: IcVariant,
    mbar_l: usize,
}

fn factorize(a: &CsrMatrix, keep: FactorKeep, variant: IcVariant) -> Result<IcFactor> {
    if !a.is_square() {
        return Err(Error::dims("incomplete Cholesky", a.nrows(), a.ncols()));
    }
    let f = ColumnFactor::new(a, keep)?;
    let l = Arc::new(f.lower().clone());
    let lt = Arc::new(f.upper().clone());
    let mbar_l = l.max_nnz_row_or_col();
    Ok(IcFactor {
        l_stored: l.clone(),
        lt_stored: lt.clone(),
        l,
        lt,
        store: PrecisionSpec::double(),
        solve: PrecisionSpec::double(),
        variant,
        mbar_l,
    })
}

/// IC(0): `L` has exactly the lower pattern of `A`.
pub fn ic0_factorize(a: &CsrMatrix) -> Result<IcFactor> {
    factorize(a, FactorKeep::ZeroFill, IcVariant::Ic0)
}

/// Threshold IC with the default drop rule (column 1-norm of `A`).
pub fn ict_factorize(a: &CsrMatrix, dpt: f64) -> Result<IcFactor> {
    ict_factorize_with(a, dpt, DropRule::default())
}

pub fn ict_factorize_with(a: &CsrMatrix, dpt: f64, rule: DropRule) -> Result<IcFactor> {
    if !(dpt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "drop tolerance must be positive, got {dpt}"
        )));
    }
    let keep = match rule {
        DropRule::ColumnNorm => FactorKeep::ColumnNormThreshold(dpt),
        DropRule::DiagonalScaled => FactorKeep::Threshold(dpt),
    };
    factorize(a, keep, IcVariant::Ict { dpt, rule })
}

pub fn factorize_variant(a: &CsrMatrix, variant: IcVariant) -> Result<IcFactor> {
    match variant {
        IcVariant::Ic0 => ic0_factorize(a),
        IcVariant::Ict { dpt, rule } => ict_factorize_with(a, dpt, rule),
    }
}

impl IcFactor {
    /// Same factor with new storage (`ε^R`) and solve (`ε^S`) precisions.
    /// Requires `ε^R >= ε^S`.
    pub fn with_precisions(&self, store: PrecisionSpec, solve: PrecisionSpec) -> Result<Self> {
        if store.unit_roundoff() < solve.unit_roundoff() {
            return Err(Error::Precondition(format!(
                "store precision {store} is finer than solve precision {solve}"
            )));
        }
        let (l_stored, lt_stored) = if store.is_exact_double() {
            (self.l.clone(), self.lt.clone())
        } else {
            let ls = round_matrix(&self.l, &store)?;
            if let Some(i) = ls.diagonal().iter().position(|&d| d == 0.0) {
                return Err(Error::Breakdown { row: i, pivot: 0.0 });
            }
            let lts = ls.transpose();
            (Arc::new(ls), Arc::new(lts))
        };
        Ok(IcFactor {
            l: self.l.clone(),
            lt: self.lt.clone(),
            l_stored,
            lt_stored,
            store,
            solve,
            variant: self.variant,
            mbar_l: self.mbar_l,
        })
    }

    /// The factor as if computed in `fact`: `L` rounded entrywise to `fact`,
    /// stored and applied in double until [`IcFactor::with_precisions`].
    pub fn with_factor_precision(&self, fact: &PrecisionSpec) -> Result<Self> {
        if fact.is_exact_double() {
            return Ok(self.clone());
        }
        let l = round_matrix(&self.l, fact)?;
        if let Some(i) = l.diagonal().iter().position(|&d| d == 0.0) {
            return Err(Error::Breakdown { row: i, pivot: 0.0 });
        }
        let l = Arc::new(l);
        let lt = Arc::new(l.transpose());
        Ok(IcFactor {
            l_stored: l.clone(),
            lt_stored: lt.clone(),
            l,
            lt,
            store: PrecisionSpec::double(),
            solve: PrecisionSpec::double(),
            variant: self.variant,
            mbar_l: self.mbar_l,
        })
    }

    pub fn l(&self) -> &CsrMatrix {
        &self.l
    }

    pub fn l_stored(&self) -> &CsrMatrix {
        &self.l_stored
    }

    pub fn store_spec(&self) -> &PrecisionSpec {
        &self.store
    }

    pub fn solve_spec(&self) -> &PrecisionSpec {
        &self.solve
    }

    pub fn variant(&self) -> IcVariant {
        self.variant
    }

    /// `m̄_L`.
    pub fn mbar_l(&self) -> usize {
        self.mbar_l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `‖L^{-1}‖²` by power iteration on `L^{-T} L^{-1}`.
    pub fn norm_linv_sq(&self, opts: PowerOptions) -> Result<NormEstimate> {
        crate::sparse::norm2_estimate(&LinvOperator(self), opts)
    }

    /// `‖|L|‖`.
    pub fn abs_norm_l(&self, opts: PowerOptions) -> Result<NormEstimate> {
        crate::sparse::abs_norm2_estimate(&self.l, opts)
    }

    fn check_model(&self) -> Result<()> {
        let c = self.mbar_l as f64 * self.solve.unit_roundoff();
        if c >= 1.0 {
            return Err(Error::Precondition(format!(
                "m̄_L * eps^S = {c} >= 1 (m̄_L = {}, solve precision {})",
                self.mbar_l, self.solve
            )));
        }
        Ok(())
    }

    /// The smoother: round `f` to `ε^S`, forward substitution with the stored
    /// `L`, backward substitution with the stored `Lᵀ`, all in `ε^S`. With
    /// `use_rhs_scaling`, `f` is first divided by the power of two nearest to
    /// `‖f‖∞` and the result multiplied back.
    pub fn apply(&self, f: &[f64], use_rhs_scaling: bool) -> Result<Vec<f64>> {
        if f.len() != self.dim() {
            return Err(Error::dims("ic_apply", self.dim(), f.len()));
        }
        self.check_model()?;
        let (mut x, s_f) = if use_rhs_scaling {
            scale_rhs(f)
        } else {
            (f.to_vec(), 1.0)
        };
        let r = self.solve.rounder();
        for v in x.iter_mut() {
            *v = r.round(*v);
        }
        forward_rounded(&self.l_stored, &mut x, &r);
        backward_rounded(&self.lt_stored, &mut x, &r);
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                value: *bad,
                label: self.solve.label().to_string(),
            });
        }
        if s_f != 1.0 {
            vector::scale_in_place(s_f, &mut x);
        }
        Ok(x)
    }

    /// `M f = L^{-T} L^{-1} f` in double with the unrounded factor.
    pub fn apply_exact(&self, f: &[f64]) -> Vec<f64> {
        let mut x = f.to_vec();
        forward_exact(&self.l, &mut x);
        backward_exact(&self.lt, &mut x);
        x
    }
}

/// Free-function form of [`IcFactor::apply`].
pub fn ic_apply(factor: &IcFactor, f: &[f64], use_rhs_scaling: bool) -> Result<Vec<f64>> {
    factor.apply(f, use_rhs_scaling)
}

struct LinvOperator<'a>(&'a IcFactor);

impl crate::sparse::SymmetricOperator for LinvOperator<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.0.apply_exact(x));
    }
}

fn forward_rounded(l: &CsrMatrix, x: &mut [f64], r: &Rounder) {
    for i in 0..l.nrows() {
        let (cols, vals) = l.row(i);
        let last = cols.len() - 1;
        let mut s = x[i];
        for k in 0..last {
            s = r.sub(s, r.mul(vals[k], x[cols[k]]));
        }
        x[i] = r.div(s, vals[last]);
    }
}

fn backward_rounded(u: &CsrMatrix, x: &mut [f64], r: &Rounder) {
    for i in (0..u.nrows()).rev() {
        let (cols, vals) = u.row(i);
        let mut s = x[i];
        for k in 1..cols.len() {
            s = r.sub(s, r.mul(vals[k], x[cols[k]]));
        }
        x[i] = r.div(s, vals[0]);
    }
}

fn forward_exact(l: &CsrMatrix, x: &mut [f64]) {
    forward_rounded(l, x, &PrecisionSpec::double().rounder());
}

fn backward_exact(u: &CsrMatrix, x: &mut [f64]) {
    backward_rounded(u, x, &PrecisionSpec::double().rounder());
}

/// Triangular solve with rounding in `spec` after every multiply, subtract
/// and divide. `t` must be lower triangular with a nonzero stored diagonal;
/// rows are processed in index order and each row accumulates by ascending
/// column.
pub fn substitution(
    t: &CsrMatrix,
    b: &[f64],
    spec: &PrecisionSpec,
    orientation: Orientation,
) -> Result<Vec<f64>> {
    if !t.is_square() {
        return Err(Error::dims("substitution", t.nrows(), t.ncols()));
    }
    if t.nrows() != b.len() {
        return Err(Error::dims("substitution", t.nrows(), b.len()));
    }
    if !t.is_lower_triangular() {
        return Err(Error::InvalidStructure("substitution needs a lower-triangular matrix".into()));
    }
    for i in 0..t.nrows() {
        let (cols, vals) = t.row(i);
        if cols.last() != Some(&i) || vals[vals.len() - 1] == 0.0 {
            return Err(Error::Breakdown { row: i, pivot: 0.0 });
        }
    }
    let m = match orientation {
        Orientation::Lower => t.max_nnz_row(),
        Orientation::UpperTransposed => t.max_nnz_col(),
    };
    let c = m as f64 * spec.unit_roundoff();
    if c >= 1.0 {
        return Err(Error::Precondition(format!(
            "m_T * eps = {c} >= 1 for m_T = {m}, precision {spec}"
        )));
    }
    let r = spec.rounder();
    let mut x = b.to_vec();
    match orientation {
        Orientation::Lower => forward_rounded(t, &mut x, &r),
        Orientation::UpperTransposed => backward_rounded(&t.transpose(), &mut x, &r),
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Overflow {
            value: *bad,
            label: spec.label().to_string(),
        });
    }
    Ok(x)
}

/// A smoother `M_j` with a finite-precision and a reference application.
pub trait Smoother: Send + Sync {
    fn dim(&self) -> usize;
    /// Finite-precision application.
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>>;
    /// Reference application in double with unrounded data.
    fn apply_exact(&self, f: &[f64]) -> Vec<f64>;
    /// Unit roundoff of the smoother output.
    fn output_roundoff(&self) -> f64;
}

/// Incomplete Cholesky smoother.
#[derive(Clone, Debug)]
pub struct IcSmoother {
    pub factor: IcFactor,
    pub use_rhs_scaling: bool,
}

impl Smoother for IcSmoother {
    fn dim(&self) -> usize {
        self.factor.dim()
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.factor.apply(f, self.use_rhs_scaling)
    }

    fn apply_exact(&self, f: &[f64]) -> Vec<f64> {
        self.factor.apply_exact(f)
    }

    fn output_roundoff(&self) -> f64 {
        self.factor.solve_spec().unit_roundoff()
    }
}

/// `M = A^{-1}` through a double-precision sparse Cholesky factorization.
#[derive(Clone, Debug)]
pub struct ExactInverseSmoother {
    chol: Arc<Cholesky>,
}

impl ExactInverseSmoother {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        Ok(ExactInverseSmoother {
            chol: Arc::new(Cholesky::new(a)?),
        })
    }
}

impl Smoother for ExactInverseSmoother {
    fn dim(&self) -> usize {
        self.chol.dim()
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(self.chol.solve(f))
    }

    fn apply_exact(&self, f: &[f64]) -> Vec<f64> {
        self.chol.solve(f)
    }

    fn output_roundoff(&self) -> f64 {
        PrecisionSpec::double().unit_roundoff()
    }
}

/// `‖I − M A‖_A` for the reference smoother by power iteration in the
/// `A`-inner product. `I − MA` is self-adjoint there when `M` is symmetric.
pub fn smoother_contraction(
    a: &CsrMatrix,
    smoother: &dyn Smoother,
    opts: PowerOptions,
) -> Result<NormEstimate> {
    let n = a.nrows();
    if smoother.dim() != n {
        return Err(Error::dims("smoother_contraction", n, smoother.dim()));
    }
    let op = ErrorPropagation { a, smoother };
    crate::sparse::norm2_estimate(&op, opts).map(|e| NormEstimate {
        value: e.value.max(0.0).sqrt(),
        ..e
    })
}

/// `E² = (I − MA)²`. `E` is `A`-self-adjoint with real eigenvalues, so the
/// dominant eigenvalue of `E²` is `‖E‖_A²`.
struct ErrorPropagation<'a> {
    a: &'a CsrMatrix,
    smoother: &'a dyn Smoother,
}

impl ErrorPropagation<'_> {
    fn e(&self, x: &[f64]) -> Vec<f64> {
        let mx = self.smoother.apply_exact(&self.a.spmv(x));
        vector::sub(x, &mx)
    }
}

impl crate::sparse::SymmetricOperator for ErrorPropagation<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ex = self.e(x);
        y.copy_from_slice(&self.e(&ex));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fparith::PrecisionSpec;

    fn laplace(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn diagonal_factor() {
        let a = CsrMatrix::diagonal_matrix(&[4.0, 9.0]);
        let f = ic0_factorize(&a).unwrap();
        assert_eq!(f.l().to_dense(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
        assert_eq!(f.apply_exact(&[4.0, 9.0]), vec![1.0, 1.0]);
        assert_eq!(f.apply(&[0.0, 0.0], false).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn ic0_on_tridiagonal_is_exact() {
        let a = laplace(5).scale(4.0);
        let f = ic0_factorize(&a).unwrap();
        let llt = f.l().matmul(&f.l().transpose()).unwrap();
        assert!(llt.add_scaled(-1.0, &a).unwrap().max_abs() < 1e-13);
        assert_eq!(f.mbar_l(), 2);
    }

    #[test]
    fn substitution_identity_and_errors() {
        let i = CsrMatrix::identity(3);
        let b = vec![1.0, -2.0, 3.5];
        let h = PrecisionSpec::half();
        assert_eq!(substitution(&i, &b, &h, Orientation::Lower).unwrap(), b);
        assert_eq!(substitution(&i, &b, &h, Orientation::UpperTransposed).unwrap(), b);
        let up = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(substitution(&up, &[1.0, 1.0], &h, Orientation::Lower).is_err());
        let zero_diag = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert!(matches!(
            substitution(&zero_diag, &[1.0, 1.0], &h, Orientation::Lower),
            Err(Error::Breakdown { row: 1, .. })
        ));
    }

    #[test]
    fn store_must_not_be_finer_than_solve() {
        let f = ic0_factorize(&laplace(4)).unwrap();
        assert!(f
            .with_precisions(PrecisionSpec::single(), PrecisionSpec::half())
            .is_err());
        let g = f
            .with_precisions(PrecisionSpec::half(), PrecisionSpec::single())
            .unwrap();
        assert_eq!(g.l_stored().nnz(), f.l().nnz());
    }

    #[test]
    fn rhs_scaling_is_exact_in_double() {
        let f = ic0_factorize(&laplace(6)).unwrap();
        let rhs: Vec<f64> = (0..6).map(|i| 37.0 * (i as f64 + 0.3).cos()).collect();
        let a = f.apply(&rhs, false).unwrap();
        let b = f.apply(&rhs, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_inverse_smoother_contracts_to_zero() {
        let a = laplace(8);
        let s = ExactInverseSmoother::new(&a).unwrap();
        let c = smoother_contraction(&a, &s, PowerOptions::default()).unwrap();
        assert!(c.value < 1e-6);
        let ic = IcSmoother {
            factor: ic0_factorize(&a).unwrap(),
            use_rhs_scaling: false,
        };
        let c = smoother_contraction(&a, &ic, PowerOptions::default()).unwrap();
        assert!(c.value < 1e-6);
    }
}
