//! A-priori bounds on the finite precision error of IC smoothing, the
//! two-grid cycle and the V-cycle.
//!
//! Every bound is evaluated with its higher-order remainder dropped. Unit
//! roundoffs are passed as plain `f64` values so that the exact-arithmetic
//! case `ε = 0` can be evaluated directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::{CoarseSolver, IcFactors};
use crate::error::{Error, Result};
use crate::hierarchy::{MgHierarchy, PrecisionPlan};
use crate::icsmooth::IcFactor;
use crate::sparse::{
    abs_norm2_estimate, inverse_norm_estimate, spectral_norm_estimate, CsrMatrix, NormEstimate,
    PowerOptions,
};

/// `m / (1 - m ε)`, the amplified nonzero count of a rounded sparse product.
pub fn amplified_count(m: usize, eps: f64) -> Result<f64> {
    let me = m as f64 * eps;
    if !(me < 1.0) {
        return Err(Error::Precondition(format!(
            "count {m} times unit roundoff {eps:e} is not below 1"
        )));
    }
    Ok(m as f64 / (1.0 - me))
}

/// Quantities of the IC factor `L` entering the smoother bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcConstants {
    /// Maximum nonzeros per row or column of `L`.
    pub mbar_l: usize,
    /// `‖L^{-1}‖²`.
    pub norm_linv_sq: f64,
    /// `‖|L|‖`.
    pub abs_norm_l: f64,
    /// `‖L^{-1}‖ ‖|L|‖`.
    pub kappa_bar_l: f64,
}

impl IcConstants {
    pub fn compute(factor: &IcFactor, opts: PowerOptions) -> Result<(Self, Vec<String>)> {
        let mut flags = Vec::new();
        let linv = flagged(factor.norm_linv_sq(opts)?, "norm_linv_sq", &mut flags);
        let abs_l = flagged(factor.abs_norm_l(opts)?, "abs_norm_l", &mut flags);
        Ok((
            IcConstants {
                mbar_l: factor.mbar_l(),
                norm_linv_sq: linv,
                abs_norm_l: abs_l,
                kappa_bar_l: linv.sqrt() * abs_l,
            },
            flags,
        ))
    }

    /// `m̄_{L,ε} = m̄_L / (1 - m̄_L ε)`.
    pub fn mbar_l_eps(&self, eps: f64) -> Result<f64> {
        amplified_count(self.mbar_l, eps)
    }
}

/// Norms, counts and ratios of one hierarchy level.
///
/// Fields tied to the prolongation into this level (`P_j`), to the coarser
/// neighbour or to the IC factor are absent on the coarsest level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelConstants {
    pub level: usize,
    pub n: usize,
    /// `‖A_j‖`.
    pub norm_a: f64,
    /// `‖|A_j|‖`.
    pub abs_norm_a: f64,
    /// `‖A_j^{-1}‖`.
    pub norm_ainv: f64,
    /// `κ^{1/2}_{A_j} = (‖A_j‖ ‖A_j^{-1}‖)^{1/2}`.
    pub kappa_sqrt: f64,
    /// `‖A_j^{-1}‖ ‖|A_j|‖`.
    pub kappa_bar_a: f64,
    /// Maximum nonzeros per row of `A_j`.
    pub m_a: usize,
    /// `‖P_j‖`.
    pub norm_p: Option<f64>,
    /// `‖|P_j|‖`.
    pub abs_norm_p: Option<f64>,
    /// Maximum nonzeros per row or column of `P_j`.
    pub mbar_p: Option<usize>,
    /// `‖A_{j-1}^{-1}‖^{1/2} / ‖A_j^{-1}‖^{1/2}`.
    pub xi: Option<f64>,
    /// `‖A_j‖^{1/2} / ‖A_{j-1}‖^{1/2}`.
    pub xi_alt: Option<f64>,
    pub ic: Option<IcConstants>,
    /// Norm estimates that hit the iteration limit.
    pub flags: Vec<String>,
}

impl LevelConstants {
    /// `m_{A,ε} = (m_A + 2) / (1 - (m_A + 2) ε)`.
    pub fn m_a_eps(&self, eps: f64) -> Result<f64> {
        amplified_count(self.m_a + 2, eps)
    }

    /// `m̄_{P,ε} = (m̄_P + 1) / (1 - (m̄_P + 1) ε)`.
    pub fn mbar_p_eps(&self, eps: f64) -> Result<f64> {
        amplified_count(self.mbar_p_required()? + 1, eps)
    }

    /// `m̄_{L,ε} = m̄_L / (1 - m̄_L ε)`.
    pub fn mbar_l_eps(&self, eps: f64) -> Result<f64> {
        self.ic_required()?.mbar_l_eps(eps)
    }

    pub fn xi_value(&self, def: XiDefinition) -> Result<f64> {
        let v = match def {
            XiDefinition::InverseNormRatio => self.xi,
            XiDefinition::NormRatio => self.xi_alt,
        };
        v.ok_or_else(|| self.missing("xi"))
    }

    fn mbar_p_required(&self) -> Result<usize> {
        self.mbar_p.ok_or_else(|| self.missing("m̄_P"))
    }

    fn ic_required(&self) -> Result<&IcConstants> {
        self.ic.as_ref().ok_or_else(|| self.missing("IC factor constants"))
    }

    fn missing(&self, what: &str) -> Error {
        Error::InvalidArgument(format!("level {} has no {what}", self.level))
    }
}

/// Which ratio of neighbouring levels is used as `ξ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiDefinition {
    /// `‖A_C^{-1}‖^{1/2} / ‖A^{-1}‖^{1/2}`.
    #[default]
    InverseNormRatio,
    /// `‖A‖^{1/2} / ‖A_C‖^{1/2}`.
    NormRatio,
}

impl std::str::FromStr for XiDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-norm-ratio" | "inverse" => Ok(XiDefinition::InverseNormRatio),
            "norm-ratio" | "norm" => Ok(XiDefinition::NormRatio),
            _ => Err(Error::InvalidArgument(format!(
                "unknown xi definition '{s}' (expected inverse-norm-ratio or norm-ratio)"
            ))),
        }
    }
}

fn flagged(e: NormEstimate, name: &str, flags: &mut Vec<String>) -> f64 {
    if !e.converged {
        flags.push(format!("{name} not converged after {} iterations", e.iterations));
    }
    e.value
}

fn matrix_constants(a: &CsrMatrix, opts: PowerOptions, flags: &mut Vec<String>) -> Result<(f64, f64, f64)> {
    let norm_a = flagged(spectral_norm_estimate(a, opts)?, "norm_a", flags);
    let abs_norm_a = flagged(abs_norm2_estimate(a, opts)?, "abs_norm_a", flags);
    let norm_ainv = flagged(inverse_norm_estimate(a, opts)?, "norm_ainv", flags);
    Ok((norm_a, abs_norm_a, norm_ainv))
}

/// Constants of every level, estimated in parallel. Spectral quantities use
/// power iteration with `opts`; counts are exact.
pub fn compute_level_constants(
    h: &MgHierarchy,
    factors: Option<&IcFactors>,
    opts: PowerOptions,
) -> Result<Vec<LevelConstants>> {
    if let Some(f) = factors {
        if f.len() != h.n_levels() {
            return Err(Error::dims("IC factors", h.n_levels(), f.len()));
        }
    }
    let mut out = (0..h.n_levels())
        .into_par_iter()
        .map(|j| {
            let a = h.a(j);
            let mut flags = Vec::new();
            let (norm_a, abs_norm_a, norm_ainv) = matrix_constants(a, opts, &mut flags)?;
            let (norm_p, abs_norm_p, mbar_p) = if j == 0 {
                (None, None, None)
            } else {
                let p = h.p(j);
                (
                    Some(flagged(spectral_norm_estimate(p, opts)?, "norm_p", &mut flags)),
                    Some(flagged(abs_norm2_estimate(p, opts)?, "abs_norm_p", &mut flags)),
                    Some(p.max_nnz_row_or_col()),
                )
            };
            let ic = match factors.and_then(|f| f.factor(j)) {
                Some(factor) => {
                    let (c, fl) = IcConstants::compute(factor, opts)?;
                    flags.extend(fl);
                    Some(c)
                }
                None => None,
            };
            Ok(LevelConstants {
                level: j,
                n: a.nrows(),
                norm_a,
                abs_norm_a,
                norm_ainv,
                kappa_sqrt: (norm_a * norm_ainv).sqrt(),
                kappa_bar_a: norm_ainv * abs_norm_a,
                m_a: a.max_nnz_row(),
                norm_p,
                abs_norm_p,
                mbar_p,
                xi: None,
                xi_alt: None,
                ic,
                flags,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for j in 1..out.len() {
        let (coarse, fine) = (&out[j - 1], &out[j]);
        let xi = (coarse.norm_ainv / fine.norm_ainv).sqrt();
        let xi_alt = (fine.norm_a / coarse.norm_a).sqrt();
        out[j].xi = Some(xi);
        out[j].xi_alt = Some(xi_alt);
    }
    Ok(out)
}

/// `η_T = ε^R + ε^S m_{T,ε^S} + ε^R ε^S m_{T,ε^S}`.
pub fn eta(eps_store: f64, eps_solve: f64, mbar: usize) -> Result<f64> {
    let m = amplified_count(mbar, eps_solve)?;
    Ok(eps_store + eps_solve * m + eps_store * eps_solve * m)
}

/// Error bound of the perturbed substitution: when `η κ̲_T < 1/2`, the
/// relative error of the computed solution is at most
/// `η κ̲_T (1 + 2 η κ̲_T)`.
pub fn perturbed_substitution_bound(eta: f64, kappa_bar_t: f64) -> Result<f64> {
    let ek = eta * kappa_bar_t;
    if !(ek < 0.5) {
        return Err(Error::Precondition(format!(
            "eta * kappa_bar_T = {ek:e} is not below 1/2"
        )));
    }
    Ok(ek * (1.0 + 2.0 * ek))
}

/// `Λ_IC` with the hypothesis quantities it was checked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcBound {
    pub value: f64,
    pub eta: f64,
    /// `η_L κ̲_L`, required below 1/2.
    pub eta_kappa: f64,
}

/// `Λ_IC = 2(ε^R + ε^S(m̄_{L,ε^S} + 1/2)) κ̲_L ‖L^{-1}‖²`.
///
/// Fails when `m̄_L ε^S >= 1` or `η_L κ̲_L >= 1/2`.
pub fn lambda_ic(c: &IcConstants, eps_store: f64, eps_solve: f64) -> Result<IcBound> {
    let value = lambda_ic_value(c, eps_store, eps_solve)?;
    let eta = eta(eps_store, eps_solve, c.mbar_l)?;
    let eta_kappa = eta * c.kappa_bar_l;
    if !(eta_kappa < 0.5) {
        return Err(Error::Precondition(format!(
            "eta_L * kappa_bar_L = {eta_kappa:e} is not below 1/2"
        )));
    }
    Ok(IcBound {
        value,
        eta,
        eta_kappa,
    })
}

/// The `Λ_IC` formula without the `η_L κ̲_L < 1/2` check.
pub fn lambda_ic_value(c: &IcConstants, eps_store: f64, eps_solve: f64) -> Result<f64> {
    let m = c.mbar_l_eps(eps_solve).map_err(|_| {
        Error::Precondition(format!(
            "m̄_L * eps_S = {:e} is not below 1",
            c.mbar_l as f64 * eps_solve
        ))
    })?;
    Ok(2.0 * (eps_store + eps_solve * (m + 0.5)) * c.kappa_bar_l * c.norm_linv_sq)
}

/// Inputs for the bound contribution of one fine level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelInput {
    /// `‖M_j‖`.
    pub norm_m: f64,
    /// `Λ_{M_j}`.
    pub lambda_m: f64,
    /// `ε̇_j`.
    pub eps_dot: f64,
}

/// Contribution of one fine level to a cycle bound.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTerm {
    pub level: usize,
    /// `3 ‖A_j‖ Λ_{M_j}`.
    pub smoother: f64,
    /// `ε̇_j κ^{1/2}_{A_j} (C_1 ‖M_j‖ + C_2)`.
    pub dot: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda_m: f64,
    pub norm_m: f64,
    pub eps_dot: f64,
    pub kappa_sqrt: f64,
    pub eps_store: Option<f64>,
    pub eps_solve: Option<f64>,
    pub kappa_bar_l: Option<f64>,
    pub norm_linv_sq: Option<f64>,
}

impl LevelTerm {
    pub fn total(&self) -> f64 {
        self.smoother + self.dot
    }
}

/// A cycle bound split into coarse-solver, smoother and dot-precision parts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub total: f64,
    /// `Λ_C` for the two-grid cycle, `Λ_0` for the V-cycle.
    pub coarse: f64,
    pub smoother: f64,
    pub dot: f64,
    pub levels: Vec<LevelTerm>,
}

impl BoundBreakdown {
    pub fn write_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        write_json(self, path)
    }
}

pub(crate) fn write_json<T: Serialize>(v: &T, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), v)?;
    Ok(())
}

/// `C_1 = 2ξ‖P‖(1 + m_{A,ε̇})‖|A|‖ + 3‖A‖` and
/// `C_2 = ξ(2‖P‖(1 + m_{A,ε̇}) + 4 m̄_{P,ε̇}‖|P|‖) + 2`.
pub fn c_constants(c: &LevelConstants, eps_dot: f64, xi_def: XiDefinition) -> Result<(f64, f64)> {
    let xi = c.xi_value(xi_def)?;
    let norm_p = c.norm_p.ok_or_else(|| c.missing("‖P‖"))?;
    let abs_norm_p = c.abs_norm_p.ok_or_else(|| c.missing("‖|P|‖"))?;
    let m_a = c.m_a_eps(eps_dot)?;
    let m_p = c.mbar_p_eps(eps_dot)?;
    let c1 = 2.0 * xi * norm_p * (1.0 + m_a) * c.abs_norm_a + 3.0 * c.norm_a;
    let c2 = xi * (2.0 * norm_p * (1.0 + m_a) + 4.0 * m_p * abs_norm_p) + 2.0;
    Ok((c1, c2))
}

fn level_term(c: &LevelConstants, input: LevelInput, xi_def: XiDefinition) -> Result<LevelTerm> {
    let (c1, c2) = c_constants(c, input.eps_dot, xi_def)?;
    Ok(LevelTerm {
        level: c.level,
        smoother: 3.0 * c.norm_a * input.lambda_m,
        dot: input.eps_dot * c.kappa_sqrt * (c1 * input.norm_m + c2),
        c1,
        c2,
        lambda_m: input.lambda_m,
        norm_m: input.norm_m,
        eps_dot: input.eps_dot,
        kappa_sqrt: c.kappa_sqrt,
        ..LevelTerm::default()
    })
}

/// `Λ_TG = Λ_C + 3‖A‖Λ_M + ε̇ κ^{1/2}_A (C_1‖M‖ + C_2)` for the fine level
/// `fine` of a two-grid cycle.
pub fn lambda_tg(
    fine: &LevelConstants,
    input: LevelInput,
    lambda_c: f64,
    xi_def: XiDefinition,
) -> Result<BoundBreakdown> {
    let term = level_term(fine, input, xi_def)?;
    Ok(BoundBreakdown {
        total: lambda_c + term.total(),
        coarse: lambda_c,
        smoother: term.smoother,
        dot: term.dot,
        levels: vec![term],
    })
}

/// `Λ_V = Λ_0 + Σ_j (3‖A_j‖Λ_{M_j} + ε̇_j κ^{1/2}_{A_j}(C_{1,j}‖M_j‖ + C_{2,j}))`.
///
/// `constants` covers levels `0..=J`; `inputs[k]` belongs to level `k + 1`.
pub fn lambda_v(
    constants: &[LevelConstants],
    inputs: &[LevelInput],
    lambda_0: f64,
    xi_def: XiDefinition,
) -> Result<BoundBreakdown> {
    if constants.is_empty() {
        return Err(Error::InvalidArgument("no levels".into()));
    }
    if inputs.len() + 1 != constants.len() {
        return Err(Error::dims("level inputs", constants.len() - 1, inputs.len()));
    }
    let levels = constants[1..]
        .iter()
        .zip(inputs)
        .map(|(c, &inp)| level_term(c, inp, xi_def))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(lambda_0, levels))
}

fn assemble(lambda_0: f64, levels: Vec<LevelTerm>) -> BoundBreakdown {
    let smoother: f64 = levels.iter().map(|t| t.smoother).sum();
    let dot: f64 = levels.iter().map(|t| t.dot).sum();
    BoundBreakdown {
        total: lambda_0 + smoother + dot,
        coarse: lambda_0,
        smoother,
        dot,
        levels,
    }
}

/// How the coarsest system is solved, for the purpose of `Λ_0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseModel {
    pub solver: CoarseSolver,
    /// Unit roundoff `A_0` is rounded to before the solve.
    pub eps_matrix: f64,
    /// Unit roundoff the coarse solution is rounded to.
    pub eps_out: f64,
}

impl CoarseModel {
    /// The coarse solve performed by the cycle for `plan`: `A_0` is rounded
    /// to the finest dot precision and the result to the dot precision of
    /// level 1.
    pub fn for_plan(plan: &PrecisionPlan, solver: CoarseSolver) -> Self {
        let nl = plan.len();
        CoarseModel {
            solver,
            eps_matrix: plan.level(nl - 1).dot.unit_roundoff(),
            eps_out: plan.level(if nl > 1 { 1 } else { 0 }).dot.unit_roundoff(),
        }
    }

    pub fn uniform(solver: CoarseSolver, eps: f64) -> Self {
        CoarseModel {
            solver,
            eps_matrix: eps,
            eps_out: eps,
        }
    }
}

/// `Λ_0`, bounding `‖δ_0‖_{A_0} <= Λ_0 ‖A_0^{-1} f_0‖_{A_0}`.
///
/// Rounding `A_0` entrywise to `ε_M` perturbs the solution by at most
/// `ε_M κ̲(A_0)` in the energy norm; rounding the result to `ε_out` adds
/// `ε_out κ^{1/2}(A_0)`. A double-precision Cholesky solve adds its backward
/// error `γ_{3n+1} n κ(A_0)`; an inner CG solve stopped at relative residual
/// `tol` adds `tol κ^{1/2}(A_0)`.
pub fn lambda_0(c0: &LevelConstants, model: &CoarseModel) -> f64 {
    let rounding = model.eps_matrix * c0.kappa_bar_a + model.eps_out * c0.kappa_sqrt;
    let solver = match model.solver {
        CoarseSolver::Direct => {
            let u = f64::EPSILON / 2.0;
            let k = (3 * c0.n + 1) as f64 * u;
            let gamma = k / (1.0 - k);
            gamma * c0.n as f64 * c0.kappa_sqrt * c0.kappa_sqrt
        }
        CoarseSolver::CgInner { tol, .. } => tol * c0.kappa_sqrt,
    };
    rounding + solver
}

/// Unit roundoffs of one fine level for the V-cycle with IC smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcLevelEps {
    pub dot: f64,
    pub store: f64,
    pub solve: f64,
}

impl IcLevelEps {
    pub fn uniform(eps: f64) -> Self {
        IcLevelEps {
            dot: eps,
            store: eps,
            solve: eps,
        }
    }

    pub fn from_plan(plan: &PrecisionPlan) -> Vec<Self> {
        plan.levels()
            .iter()
            .skip(1)
            .map(|lp| IcLevelEps {
                dot: lp.dot.unit_roundoff(),
                store: lp.store.unit_roundoff(),
                solve: lp.solve.unit_roundoff(),
            })
            .collect()
    }
}

/// V-cycle bound with IC smoothing and the hypothesis violations met on the
/// way. Violating levels still contribute their formula value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IcVBound {
    pub breakdown: BoundBreakdown,
    pub violations: Vec<String>,
}

/// `Λ_V` with `Λ_{M_j} = Λ_IC` of level `j` and `‖M_j‖ <= ‖L_j^{-1}‖²`.
///
/// `eps[k]` belongs to level `k + 1`.
pub fn lambda_v_ic(
    constants: &[LevelConstants],
    eps: &[IcLevelEps],
    coarse: &CoarseModel,
    xi_def: XiDefinition,
) -> Result<IcVBound> {
    if constants.is_empty() {
        return Err(Error::InvalidArgument("no levels".into()));
    }
    if eps.len() + 1 != constants.len() {
        return Err(Error::dims("level precisions", constants.len() - 1, eps.len()));
    }
    let mut violations = Vec::new();
    let mut levels = Vec::with_capacity(eps.len());
    for (c, e) in constants[1..].iter().zip(eps) {
        let ic = c.ic_required()?;
        let lambda_m = match lambda_ic(ic, e.store, e.solve) {
            Ok(b) => b.value,
            Err(err) => {
                violations.push(format!("level {}: {err}", c.level));
                lambda_ic_value(ic, e.store, e.solve).unwrap_or(f64::INFINITY)
            }
        };
        let input = LevelInput {
            norm_m: ic.norm_linv_sq,
            lambda_m,
            eps_dot: e.dot,
        };
        let mut term = match level_term(c, input, xi_def) {
            Ok(t) => t,
            Err(err @ Error::Precondition(_)) => {
                violations.push(format!("level {}: {err}", c.level));
                LevelTerm {
                    level: c.level,
                    smoother: 3.0 * c.norm_a * lambda_m,
                    dot: f64::INFINITY,
                    lambda_m,
                    norm_m: ic.norm_linv_sq,
                    eps_dot: e.dot,
                    kappa_sqrt: c.kappa_sqrt,
                    ..LevelTerm::default()
                }
            }
            Err(err) => return Err(err),
        };
        term.eps_store = Some(e.store);
        term.eps_solve = Some(e.solve);
        term.kappa_bar_l = Some(ic.kappa_bar_l);
        term.norm_linv_sq = Some(ic.norm_linv_sq);
        levels.push(term);
    }
    let l0 = lambda_0(&constants[0], coarse);
    Ok(IcVBound {
        breakdown: assemble(l0, levels),
        violations,
    })
}

/// Smallest significand widths keeping the IC V-cycle bound within a budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionThresholds {
    pub budget: f64,
    /// Smallest `t` with `ε̇ = ε^R = ε^S = 2^{-t}` on all levels meeting the
    /// budget.
    pub dot_bits: Option<u32>,
    /// With `ε̇` fixed at `2^{-dot_bits}`, the smallest `t` with
    /// `ε^R = ε^S = 2^{-t}` meeting the budget.
    pub smoothing_bits: Option<u32>,
}

impl PrecisionThresholds {
    /// Decimal digits carried by a significand of `t` bits.
    pub fn digits(t: u32) -> f64 {
        t as f64 * std::f64::consts::LOG10_2
    }

    pub fn dot_digits(&self) -> Option<f64> {
        self.dot_bits.map(Self::digits)
    }

    pub fn smoothing_digits(&self) -> Option<f64> {
        self.smoothing_bits.map(Self::digits)
    }
}

const MAX_BITS: u32 = 53;

fn within_budget(
    constants: &[LevelConstants],
    dot: f64,
    smoothing: f64,
    solver: CoarseSolver,
    xi_def: XiDefinition,
    budget: f64,
) -> Result<bool> {
    let eps = vec![
        IcLevelEps {
            dot,
            store: smoothing,
            solve: smoothing,
        };
        constants.len() - 1
    ];
    let b = lambda_v_ic(constants, &eps, &CoarseModel::uniform(solver, dot), xi_def)?;
    Ok(b.violations.is_empty() && b.breakdown.total <= budget)
}

/// Ascending scan over uniform precisions, then over smoothing precisions
/// with the dot precision fixed.
pub fn threshold_precisions(
    constants: &[LevelConstants],
    budget: f64,
    solver: CoarseSolver,
    xi_def: XiDefinition,
) -> Result<PrecisionThresholds> {
    let mut dot_bits = None;
    for t in 1..=MAX_BITS {
        let e = (-(t as f64)).exp2();
        if within_budget(constants, e, e, solver, xi_def, budget)? {
            dot_bits = Some(t);
            break;
        }
    }
    let mut smoothing_bits = None;
    if let Some(td) = dot_bits {
        let ed = (-(td as f64)).exp2();
        for t in 1..=td {
            if within_budget(constants, ed, (-(t as f64)).exp2(), solver, xi_def, budget)? {
                smoothing_bits = Some(t);
                break;
            }
        }
    }
    Ok(PrecisionThresholds {
        budget,
        dot_bits,
        smoothing_bits,
    })
}
