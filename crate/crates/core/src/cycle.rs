//! Two-grid and V-cycles with zero initial approximation, per-level
//! precisions, a pluggable smoother on every fine level and a coarsest-level
//! solver.
//!
//! On level `j >= 1` the cycle rounds `f_j` to `ε̇_j`, smooths, forms the
//! residual, restricts, recurses, prolongates and corrects, each operation
//! rounded per scalar to `ε̇_j` with `A_j` and `P_j` stored in `ε̇_j`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fparith::{
    round_in_place, round_matrix, rounded_add_into, rounded_residual_into, rounded_spmv_into,
    PrecisionSpec, Rounder,
};
use crate::hierarchy::{MgHierarchy, PrecisionPlan};
use crate::icsmooth::{factorize_variant, IcFactor, IcSmoother, IcVariant, Smoother};
use crate::sparse::{a_norm, cg_solve, vector, Cholesky, CsrMatrix};

/// Coarsest-level solver `M_0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoarseSolver {
    #[default]
    /// Sparse Cholesky in double on `A_0` rounded to the finest `ε̇`.
    Direct,
    /// Conjugate gradients in double on the rounded `A_0`, stopped on the
    /// iteratively computed relative residual.
    CgInner { tol: f64, max_iter: usize },
}

/// Where the smoother is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Before the coarse-grid correction only.
    #[default]
    Pre,
    /// Before and after the coarse-grid correction with the same `M_j`,
    /// which keeps the cycle symmetric for a symmetric `M_j`.
    Symmetric,
}

/// Arithmetic used by a cycle application.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arithmetic {
    /// Per-level precisions with rounded matrices.
    #[default]
    Finite,
    /// Double arithmetic with unrounded matrices and smoothers.
    ExactRef,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub coarse: CoarseSolver,
    pub smoothing: Smoothing,
}

struct LevelOps {
    a: Arc<CsrMatrix>,
    a_exact: Arc<CsrMatrix>,
    /// `P_j` and `P_jᵀ` rounded to `ε̇_j`, and their unrounded versions.
    p: Option<(Arc<CsrMatrix>, Arc<CsrMatrix>)>,
    p_exact: Option<(Arc<CsrMatrix>, Arc<CsrMatrix>)>,
    smoother: Option<Arc<dyn Smoother>>,
    dot: PrecisionSpec,
    rounder: Rounder,
}

enum CoarseOp {
    Direct {
        rounded: Arc<Cholesky>,
        exact: Arc<Cholesky>,
    },
    Cg {
        rounded: Arc<CsrMatrix>,
        exact: Arc<CsrMatrix>,
        tol: f64,
        max_iter: usize,
    },
}

/// Everything a cycle needs, built once per precision assignment. Immutable
/// and shareable across threads.
pub struct CycleConfig {
    levels: Vec<LevelOps>,
    coarse: CoarseOp,
    /// Precision the coarsest result is rounded to (`ε̇_1`).
    coarse_out: Rounder,
    options: CycleOptions,
    plan: PrecisionPlan,
}

impl std::fmt::Debug for CycleConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CycleConfig")
            .field("levels", &self.levels.len())
            .field("options", &self.options)
            .field("plan", &self.plan)
            .finish()
    }
}

fn shared_round(k: &Arc<CsrMatrix>, spec: &PrecisionSpec) -> Result<Arc<CsrMatrix>> {
    if spec.is_exact_double() {
        Ok(k.clone())
    } else {
        Ok(Arc::new(round_matrix(k, spec)?))
    }
}

impl CycleConfig {
    /// `smoothers[j]` is `M_j` for `j >= 1`; entry 0 is ignored.
    pub fn new(
        h: &MgHierarchy,
        plan: &PrecisionPlan,
        smoothers: Vec<Option<Arc<dyn Smoother>>>,
        options: CycleOptions,
    ) -> Result<Self> {
        let nl = h.n_levels();
        if plan.len() != nl {
            return Err(Error::dims("precision plan", nl, plan.len()));
        }
        if smoothers.len() != nl {
            return Err(Error::dims("smoothers", nl, smoothers.len()));
        }
        let mut levels = Vec::with_capacity(nl);
        for (j, sm) in smoothers.into_iter().enumerate() {
            let dot = plan.level(j).dot.clone();
            let a_exact = h.a(j).clone();
            let a = shared_round(&a_exact, &dot)?;
            let (p, p_exact, smoother) = if j == 0 {
                (None, None, None)
            } else {
                let eps = dot.unit_roundoff();
                let m_a = a.max_nnz_row();
                if (m_a + 2) as f64 * eps >= 1.0 {
                    return Err(Error::Precondition(format!(
                        "level {j}: (m_A + 2) * eps = {} >= 1 for dot precision {dot}",
                        (m_a + 2) as f64 * eps
                    )));
                }
                let pe = h.p(j).clone();
                let m_p = pe.max_nnz_row_or_col();
                if (m_p + 1) as f64 * eps >= 1.0 {
                    return Err(Error::Precondition(format!(
                        "level {j}: (m̄_P + 1) * eps = {} >= 1 for dot precision {dot}",
                        (m_p + 1) as f64 * eps
                    )));
                }
                let pr = shared_round(&pe, &dot)?;
                let pt_exact = Arc::new(pe.transpose());
                let pt = if Arc::ptr_eq(&pr, &pe) {
                    pt_exact.clone()
                } else {
                    Arc::new(pr.transpose())
                };
                let sm = sm.ok_or_else(|| {
                    Error::InvalidArgument(format!("missing smoother on level {j}"))
                })?;
                if sm.dim() != a.nrows() {
                    return Err(Error::dims("smoother", a.nrows(), sm.dim()));
                }
                (Some((pr, pt)), Some((pe, pt_exact)), Some(sm))
            };
            levels.push(LevelOps {
                rounder: dot.rounder(),
                a,
                a_exact,
                p,
                p_exact,
                smoother,
                dot,
            });
        }
        let finest_dot = &plan.level(nl - 1).dot;
        let a0 = h.a(0).clone();
        let a0r = shared_round(&a0, finest_dot)?;
        let coarse = match options.coarse {
            CoarseSolver::Direct => {
                let exact = Arc::new(Cholesky::new(&a0)?);
                let rounded = if Arc::ptr_eq(&a0r, &a0) {
                    exact.clone()
                } else {
                    Arc::new(Cholesky::new(&a0r).map_err(|e| match e {
                        Error::Breakdown { row, pivot } => Error::Precondition(format!(
                            "coarsest matrix rounded to {finest_dot} is not positive definite \
                             (pivot {pivot:e} at row {row}); the dot precision is too coarse"
                        )),
                        other => other,
                    })?)
                };
                CoarseOp::Direct { rounded, exact }
            }
            CoarseSolver::CgInner { tol, max_iter } => {
                if !(tol > 0.0) || max_iter == 0 {
                    return Err(Error::InvalidArgument(
                        "inner CG needs tol > 0 and max_iter > 0".into(),
                    ));
                }
                CoarseOp::Cg {
                    rounded: a0r,
                    exact: a0,
                    tol,
                    max_iter,
                }
            }
        };
        let coarse_out = plan.level(if nl > 1 { 1 } else { 0 }).dot.rounder();
        Ok(CycleConfig {
            levels,
            coarse,
            coarse_out,
            options,
            plan: plan.clone(),
        })
    }

    /// IC smoothers on every fine level from double-precision factors.
    pub fn with_ic(
        h: &MgHierarchy,
        plan: &PrecisionPlan,
        factors: &IcFactors,
        use_rhs_scaling: bool,
        options: CycleOptions,
    ) -> Result<Self> {
        let smoothers = factors.smoothers(plan, None, use_rhs_scaling)?;
        Self::new(h, plan, smoothers, options)
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn plan(&self) -> &PrecisionPlan {
        &self.plan
    }

    pub fn options(&self) -> &CycleOptions {
        &self.options
    }

    /// Unrounded `A_j`.
    pub fn a(&self, j: usize) -> &CsrMatrix {
        &self.levels[j].a_exact
    }

    /// `A_j` rounded to `ε̇_j`.
    pub fn a_rounded(&self, j: usize) -> &CsrMatrix {
        &self.levels[j].a
    }

    pub fn dot_spec(&self, j: usize) -> &PrecisionSpec {
        &self.levels[j].dot
    }

    pub fn smoother(&self, j: usize) -> Option<&Arc<dyn Smoother>> {
        self.levels[j].smoother.as_ref()
    }

    /// One V-cycle on the finest level.
    pub fn apply(&self, f: &[f64], arith: Arithmetic) -> Result<Vec<f64>> {
        v_cycle_with(f, self.finest(), self, arith, None)
    }
}

/// Incomplete Cholesky factors of every fine level, computed once in double.
#[derive(Clone, Debug)]
pub struct IcFactors {
    variant: IcVariant,
    factors: Vec<Option<IcFactor>>,
}

impl IcFactors {
    /// Factor `A_1 .. A_J` in parallel.
    pub fn build(h: &MgHierarchy, variant: IcVariant) -> Result<Self> {
        let factors = (0..h.n_levels())
            .into_par_iter()
            .map(|j| {
                if j == 0 {
                    Ok(None)
                } else {
                    factorize_variant(h.a(j), variant)
                        .map(Some)
                        .map_err(|e| match e {
                            Error::Breakdown { row, pivot } => Error::Precondition(format!(
                                "{variant} breaks down on level {j} at row {row} (pivot {pivot:e})"
                            )),
                            other => other,
                        })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IcFactors { variant, factors })
    }

    pub fn variant(&self) -> IcVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Double-precision factor of level `j >= 1`.
    pub fn factor(&self, j: usize) -> Option<&IcFactor> {
        self.factors.get(j).and_then(Option::as_ref)
    }

    /// Factors with the plan's `ε^R_j`, `ε^S_j`, optionally first rounded to a
    /// factorization precision.
    pub fn with_plan(&self, plan: &PrecisionPlan, fact: Option<&PrecisionSpec>) -> Result<Vec<Option<IcFactor>>> {
        if plan.len() != self.factors.len() {
            return Err(Error::dims("precision plan", self.factors.len(), plan.len()));
        }
        self.factors
            .iter()
            .enumerate()
            .map(|(j, f)| match f {
                None => Ok(None),
                Some(f) => {
                    let lp = plan.level(j);
                    let base = match fact {
                        Some(spec) => f.with_factor_precision(spec)?,
                        None => f.clone(),
                    };
                    base.with_precisions(lp.store.clone(), lp.solve.clone()).map(Some)
                }
            })
            .collect()
    }

    pub fn smoothers(
        &self,
        plan: &PrecisionPlan,
        fact: Option<&PrecisionSpec>,
        use_rhs_scaling: bool,
    ) -> Result<Vec<Option<Arc<dyn Smoother>>>> {
        Ok(self
            .with_plan(plan, fact)?
            .into_iter()
            .map(|f| {
                f.map(|factor| {
                    Arc::new(IcSmoother {
                        factor,
                        use_rhs_scaling,
                    }) as Arc<dyn Smoother>
                })
            })
            .collect())
    }
}

/// Per-level quantities recorded by a traced cycle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub f_norm: f64,
    pub smoothed_norm: f64,
    pub residual_norm: f64,
    pub correction_norm: f64,
    pub output_norm: f64,
    /// Rounded scalar operations performed on this level outside the smoother.
    pub rounded_ops: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub levels: Vec<LevelTrace>,
    pub coarse_norm: f64,
    pub overflow: bool,
}

fn check_finite(v: &[f64], spec: &PrecisionSpec) -> Result<()> {
    match v.iter().find(|x| !x.is_finite()) {
        Some(&bad) => Err(Error::Overflow {
            value: bad,
            label: spec.label().to_string(),
        }),
        None => Ok(()),
    }
}

fn coarsest_solve(f0: &[f64], cfg: &CycleConfig, arith: Arithmetic) -> Result<Vec<f64>> {
    let mut x = match (&cfg.coarse, arith) {
        (CoarseOp::Direct { rounded, .. }, Arithmetic::Finite) => rounded.solve(f0),
        (CoarseOp::Direct { exact, .. }, Arithmetic::ExactRef) => exact.solve(f0),
        (CoarseOp::Cg { rounded, exact, tol, max_iter }, _) => {
            let a = if arith == Arithmetic::Finite { rounded } else { exact };
            cg_solve(a, f0, *tol, *max_iter)?.x
        }
    };
    if arith == Arithmetic::Finite {
        round_in_place(&mut x, &cfg.coarse_out);
        check_finite(&x, &cfg.plan.level(cfg.n_levels().min(2) - 1).dot)?;
    }
    Ok(x)
}

/// `M_0 f_0`.
pub fn coarsest_solve_apply(f0: &[f64], cfg: &CycleConfig, arith: Arithmetic) -> Result<Vec<f64>> {
    if f0.len() != cfg.levels[0].a.nrows() {
        return Err(Error::dims("coarsest_solve", cfg.levels[0].a.nrows(), f0.len()));
    }
    coarsest_solve(f0, cfg, arith)
}

fn smooth(sm: &dyn Smoother, f: &[f64], arith: Arithmetic, r: &Rounder) -> Result<Vec<f64>> {
    match arith {
        Arithmetic::ExactRef => Ok(sm.apply_exact(f)),
        Arithmetic::Finite => {
            let mut v = sm.apply(f)?;
            round_in_place(&mut v, r);
            Ok(v)
        }
    }
}

fn v_cycle_with(
    f: &[f64],
    j: usize,
    cfg: &CycleConfig,
    arith: Arithmetic,
    mut trace: Option<&mut CycleTrace>,
) -> Result<Vec<f64>> {
    if j >= cfg.n_levels() {
        return Err(Error::InvalidArgument(format!(
            "level {j} out of range 0..{}",
            cfg.n_levels()
        )));
    }
    let lv = &cfg.levels[j];
    let n = lv.a.nrows();
    if f.len() != n {
        return Err(Error::dims("v_cycle", n, f.len()));
    }
    if j == 0 {
        let x = coarsest_solve(f, cfg, arith)?;
        if let Some(t) = trace {
            t.coarse_norm = vector::norm2(&x);
        }
        return Ok(x);
    }
    let exact = arith == Arithmetic::ExactRef;
    let r = if exact {
        crate::fparith::PrecisionSpec::double().rounder()
    } else {
        lv.rounder
    };
    let (a, (p, pt)) = if exact {
        (&lv.a_exact, lv.p_exact.as_ref().expect("fine level"))
    } else {
        (&lv.a, lv.p.as_ref().expect("fine level"))
    };
    let sm = lv.smoother.as_ref().expect("fine level").as_ref();

    // line 2: round f_j
    let mut fj = f.to_vec();
    round_in_place(&mut fj, &r);
    // line 3: smoothing
    let v1 = smooth(sm, &fj, arith, &r)?;
    // line 4: residual
    let mut r1 = vec![0.0; n];
    rounded_residual_into(&fj, a, &v1, &r, &mut r1);
    // line 5: restriction
    let mut rc = vec![0.0; pt.nrows()];
    rounded_spmv_into(pt, &r1, &r, &mut rc);
    if !exact {
        check_finite(&r1, &lv.dot)?;
        check_finite(&rc, &lv.dot)?;
    }
    // line 6: recursion
    let vc = v_cycle_with(&rc, j - 1, cfg, arith, trace.as_deref_mut())?;
    // line 7: prolongation
    let mut v3 = vec![0.0; n];
    rounded_spmv_into(p, &vc, &r, &mut v3);
    // line 8: correction
    let mut v4 = vec![0.0; n];
    rounded_add_into(&v1, &v3, &r, &mut v4);
    let mut ops = (2 * a.nnz() + 2 * p.nnz() + 3 * n) as u64;
    if cfg.options.smoothing == Smoothing::Symmetric {
        let mut r2 = vec![0.0; n];
        rounded_residual_into(&fj, a, &v4, &r, &mut r2);
        let v5 = smooth(sm, &r2, arith, &r)?;
        let mut out = vec![0.0; n];
        rounded_add_into(&v4, &v5, &r, &mut out);
        v4 = out;
        ops += (2 * a.nnz() + 2 * n) as u64;
    }
    if !exact {
        check_finite(&v4, &lv.dot)?;
    }
    if let Some(t) = trace {
        t.levels.push(LevelTrace {
            level: j,
            f_norm: vector::norm2(&fj),
            smoothed_norm: vector::norm2(&v1),
            residual_norm: vector::norm2(&r1),
            correction_norm: vector::norm2(&v3),
            output_norm: vector::norm2(&v4),
            rounded_ops: if exact { 0 } else { ops },
        });
    }
    Ok(v4)
}

/// `V(f_j, j)`: the V-cycle on levels `0..=j`.
pub fn v_cycle(f: &[f64], j: usize, cfg: &CycleConfig) -> Result<Vec<f64>> {
    v_cycle_with(f, j, cfg, Arithmetic::Finite, None)
}

/// V-cycle in the chosen arithmetic.
pub fn v_cycle_in(f: &[f64], j: usize, cfg: &CycleConfig, arith: Arithmetic) -> Result<Vec<f64>> {
    v_cycle_with(f, j, cfg, arith, None)
}

/// V-cycle recording per-level norms. An overflow is recorded in the trace
/// and returned as the error.
pub fn v_cycle_traced(
    f: &[f64],
    j: usize,
    cfg: &CycleConfig,
    arith: Arithmetic,
) -> (Result<Vec<f64>>, CycleTrace) {
    let mut trace = CycleTrace::default();
    let out = v_cycle_with(f, j, cfg, arith, Some(&mut trace));
    if matches!(out, Err(Error::Overflow { .. })) {
        trace.overflow = true;
    }
    trace.levels.sort_by_key(|l| std::cmp::Reverse(l.level));
    (out, trace)
}

/// The two-grid cycle: a V-cycle on a two-level configuration.
pub fn tg_cycle(f: &[f64], cfg: &CycleConfig) -> Result<Vec<f64>> {
    if cfg.n_levels() != 2 {
        return Err(Error::InvalidArgument(format!(
            "two-grid cycle needs 2 levels, got {}",
            cfg.n_levels()
        )));
    }
    v_cycle(f, 1, cfg)
}

/// Result of [`measure_contraction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionMeasurement {
    /// `max ‖y − ŷ‖_A / ‖y‖_A` over the trials.
    pub contraction: f64,
    /// Per-trial ratios.
    pub ratios: Vec<f64>,
}

/// Random solutions `y` with `‖y‖_A = 1` on the finest level, fixed by `seed`.
pub fn random_unit_solutions(a: &CsrMatrix, trials: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let y: Vec<f64> = (0..a.nrows()).map(|_| rng.sample(StandardNormal)).collect();
            let na = a_norm(&y, a)?;
            Ok(vector::scale(1.0 / na, &y))
        })
        .collect()
}

/// Worst observed `‖y − cycle(A y)‖_A / ‖y‖_A` over `trials` random `y`.
pub fn measure_contraction(
    cfg: &CycleConfig,
    trials: usize,
    arith: Arithmetic,
    seed: u64,
) -> Result<ContractionMeasurement> {
    let a = cfg.a(cfg.finest());
    let ys = random_unit_solutions(a, trials, seed)?;
    let ratios = ys
        .par_iter()
        .map(|y| contraction_ratio(cfg, y, arith))
        .collect::<Result<Vec<_>>>()?;
    Ok(ContractionMeasurement {
        contraction: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
    })
}

/// `‖y − cycle(A y)‖_A / ‖y‖_A` for one `y`.
pub fn contraction_ratio(cfg: &CycleConfig, y: &[f64], arith: Arithmetic) -> Result<f64> {
    let a = cfg.a(cfg.finest());
    let f = a.spmv(y);
    let yhat = cfg.apply(&f, arith)?;
    Ok(a_norm(&vector::sub(y, &yhat), a)? / a_norm(y, a)?)
}

/// `‖(y_V − ŷ_V)‖_A / ‖y‖_A`: the finite-precision error of one cycle
/// relative to the double reference, for one `y`.
pub fn finite_precision_error(cfg: &CycleConfig, y: &[f64]) -> Result<f64> {
    let a = cfg.a(cfg.finest());
    let f = a.spmv(y);
    let yv = cfg.apply(&f, Arithmetic::ExactRef)?;
    let yhat = cfg.apply(&f, Arithmetic::Finite)?;
    Ok(a_norm(&vector::sub(&yv, &yhat), a)? / a_norm(y, a)?)
}

/// Contraction estimate by power iteration on the error propagation
/// `E y = y − cycle(A y)` in the `A`-norm: the largest single-step ratio seen
/// over `iters` steps from a seeded start.
pub fn contraction_power(cfg: &CycleConfig, iters: usize, arith: Arithmetic, seed: u64) -> Result<f64> {
    let a = cfg.a(cfg.finest());
    let mut y = random_unit_solutions(a, 1, seed)?.pop().expect("one vector");
    let mut best = 0.0_f64;
    for _ in 0..iters.max(1) {
        let f = a.spmv(&y);
        let e = vector::sub(&y, &cfg.apply(&f, arith)?);
        let ne = a_norm(&e, a)?;
        best = best.max(ne);
        if ne == 0.0 {
            break;
        }
        y = vector::scale(1.0 / ne, &e);
    }
    Ok(best)
}
