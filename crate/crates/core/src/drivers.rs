//! Outer solvers around the V-cycle: iterative refinement and preconditioned
//! conjugate gradients, with reference solutions, stopping criteria,
//! stagnation detection and report output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cycle::{Arithmetic, CycleConfig};
use crate::error::{Error, Result};
use crate::sparse::{a_norm, cg_solve, vector, Cholesky, CsrMatrix};

/// Header line of every CSV file written by this crate.
pub const CSV_SCHEMA: &str = "# mgmp-schema v1";

/// Growth of the monitored quantity over its minimum treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Systems up to this size get a direct reference solution.
const DIRECT_REFERENCE_LIMIT: usize = 500_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    /// `‖b − A x‖ / ‖b‖` after refinement.
    pub rel_residual: f64,
}

/// Double-precision solution of `A x = b` by sparse Cholesky followed by one
/// refinement step.
pub fn reference_solution(a: &CsrMatrix, b: &[f64]) -> Result<ReferenceSolution> {
    if a.nrows() != b.len() {
        return Err(Error::dims("reference_solution", a.nrows(), b.len()));
    }
    let bn = vector::norm2(b);
    if bn == 0.0 {
        return Ok(ReferenceSolution {
            x: vec![0.0; b.len()],
            rel_residual: 0.0,
        });
    }
    let x = if a.nrows() <= DIRECT_REFERENCE_LIMIT {
        let chol = Cholesky::new(a)?;
        let mut x = chol.solve(b);
        let r = vector::sub(b, &a.spmv(&x));
        vector::axpy(1.0, &chol.solve(&r), &mut x);
        x
    } else {
        cg_solve(a, b, 1e-14, 10 * a.nrows())?.x
    };
    let rel_residual = vector::norm2(&vector::sub(b, &a.spmv(&x))) / bn;
    Ok(ReferenceSolution { x, rel_residual })
}

/// What the outer iteration monitors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopKind {
    /// `‖b − A x‖ / ‖b‖ <= tol`.
    RelResidual { tol: f64 },
    /// `‖x* − x‖_A <= tol` against a reference solution.
    AbsAnormError { tol: f64 },
    /// `‖x* − x‖_A / ‖x*‖_A <= tol` against a reference solution.
    RelAnormError { tol: f64 },
}

impl StopKind {
    pub fn tol(&self) -> f64 {
        match *self {
            StopKind::RelResidual { tol }
            | StopKind::AbsAnormError { tol }
            | StopKind::RelAnormError { tol } => tol,
        }
    }

    pub fn needs_reference(&self) -> bool {
        !matches!(self, StopKind::RelResidual { .. })
    }
}

impl std::str::FromStr for StopKind {
    type Err = Error;

    /// `relres:1e-10`, `anorm:1e-5` or `relanorm:1e-8`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, tol) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("stopping criterion {s:?} needs KIND:TOL")))?;
        let tol: f64 = tol
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad tolerance in {s:?}")))?;
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive in {s:?}")));
        }
        match kind {
            "relres" => Ok(StopKind::RelResidual { tol }),
            "anorm" => Ok(StopKind::AbsAnormError { tol }),
            "relanorm" => Ok(StopKind::RelAnormError { tol }),
            other => Err(Error::InvalidArgument(format!("unknown stopping criterion {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingCriterion {
    pub kind: StopKind,
    pub max_outer: usize,
}

impl StoppingCriterion {
    pub fn new(kind: StopKind, max_outer: usize) -> Result<Self> {
        if !(kind.tol() > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if max_outer == 0 {
            return Err(Error::InvalidArgument("max_outer must be positive".into()));
        }
        Ok(StoppingCriterion { kind, max_outer })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterMethod {
    Ir,
    Pcg,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// The monitored quantity became non-finite or grew by
    /// [`DIVERGENCE_FACTOR`] over its minimum.
    Diverged,
    Stagnated,
    /// The cycle failed (overflow or a violated precondition).
    CycleError(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rel_residual: f64,
    pub anorm_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: OuterMethod,
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    /// One record per iterate, starting with the zero initial guess.
    pub history: Vec<IterationRecord>,
    pub stagnation_detected: bool,
    pub plateau: Option<f64>,
    /// `‖b − A x‖ / ‖b‖` recomputed explicitly for the returned iterate.
    pub final_rel_residual: f64,
    #[serde(skip)]
    pub x: Vec<f64>,
}

impl SolveReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    /// History as CSV with columns `iteration,rel_residual,anorm_error`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{CSV_SCHEMA}").map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["iteration", "rel_residual", "anorm_error"])?;
        for r in &self.history {
            w.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.rel_residual),
                r.anorm_error.map(|e| format!("{e:e}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Plateau value when the best entry of `history` improved by less than 1%
/// over the last 5 entries. Needs at least 6 entries.
pub fn detect_stagnation(history: &[f64]) -> Option<f64> {
    let n = history.len();
    if n < 6 {
        return None;
    }
    let best = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    let before = best(&history[..n - 5]);
    let now = best(history);
    if !before.is_finite() {
        return None;
    }
    if now > 0.99 * before {
        Some(now)
    } else {
        None
    }
}

struct Monitor<'a> {
    a: &'a CsrMatrix,
    b: &'a [f64],
    bnorm: f64,
    stop: StoppingCriterion,
    reference: Option<&'a [f64]>,
    ref_anorm: f64,
    history: Vec<IterationRecord>,
    metric: Vec<f64>,
}

impl<'a> Monitor<'a> {
    fn new(
        a: &'a CsrMatrix,
        b: &'a [f64],
        stop: StoppingCriterion,
        reference: Option<&'a [f64]>,
    ) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::dims("right-hand side", a.nrows(), b.len()));
        }
        if let Some(r) = reference {
            if r.len() != b.len() {
                return Err(Error::dims("reference solution", b.len(), r.len()));
            }
        }
        if stop.kind.needs_reference() && reference.is_none() {
            return Err(Error::InvalidArgument(
                "A-norm stopping criterion needs a reference solution".into(),
            ));
        }
        let ref_anorm = match reference {
            Some(r) => a_norm(r, a)?,
            None => 1.0,
        };
        Ok(Monitor {
            a,
            b,
            bnorm: vector::norm2(b),
            stop,
            reference,
            ref_anorm,
            history: Vec::new(),
            metric: Vec::new(),
        })
    }

    fn rel(&self, rnorm: f64) -> f64 {
        if self.bnorm == 0.0 {
            rnorm
        } else {
            rnorm / self.bnorm
        }
    }

    /// Record iterate `x` with residual norm `rnorm`; returns the stop
    /// decision.
    fn record(&mut self, x: &[f64], rnorm: f64) -> Result<Option<StopReason>> {
        let iteration = self.history.len();
        let rel_residual = self.rel(rnorm);
        let anorm_error = match self.reference {
            Some(r) => Some(a_norm(&vector::sub(r, x), self.a)?),
            None => None,
        };
        self.history.push(IterationRecord {
            iteration,
            rel_residual,
            anorm_error,
        });
        let m = match self.stop.kind {
            StopKind::RelResidual { .. } => rel_residual,
            StopKind::AbsAnormError { .. } => anorm_error.expect("reference present"),
            StopKind::RelAnormError { .. } => {
                anorm_error.expect("reference present") / self.ref_anorm.max(f64::MIN_POSITIVE)
            }
        };
        self.metric.push(m);
        if m <= self.stop.kind.tol() {
            return Ok(Some(StopReason::Converged));
        }
        if !m.is_finite() {
            return Ok(Some(StopReason::Diverged));
        }
        let min = self.metric.iter().copied().fold(f64::INFINITY, f64::min);
        if m > DIVERGENCE_FACTOR * min {
            return Ok(Some(StopReason::Diverged));
        }
        // The residual of the first iterate may exceed that of the zero
        // initial guess, so the plateau search starts at iteration 1.
        if detect_stagnation(&self.metric[1..]).is_some() {
            return Ok(Some(StopReason::Stagnated));
        }
        if iteration >= self.stop.max_outer {
            return Ok(Some(StopReason::MaxIterations));
        }
        Ok(None)
    }

    fn finish(self, method: OuterMethod, x: Vec<f64>, reason: StopReason) -> SolveReport {
        let r = vector::sub(self.b, &self.a.spmv(&x));
        let final_rel_residual = self.rel(vector::norm2(&r));
        let plateau = if reason == StopReason::Stagnated {
            detect_stagnation(&self.metric[1..])
        } else {
            None
        };
        SolveReport {
            method,
            iterations: self.history.len().saturating_sub(1),
            converged: reason == StopReason::Converged,
            stagnation_detected: plateau.is_some(),
            plateau,
            reason,
            history: self.history,
            final_rel_residual,
            x,
        }
    }
}

/// Iterative refinement: `x⁰ = 0`, then `r = b − A x`, `c = V(r)`, `x ← x + c`
/// with the residual and the update in double.
pub fn ir_solve(
    cfg: &CycleConfig,
    b: &[f64],
    stop: StoppingCriterion,
    reference: Option<&[f64]>,
) -> Result<SolveReport> {
    let a = cfg.a(cfg.finest());
    let mut mon = Monitor::new(a, b, stop, reference)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut reason = mon.record(&x, vector::norm2(&r))?;
    while reason.is_none() {
        let c = match cfg.apply(&r, Arithmetic::Finite) {
            Ok(c) => c,
            Err(e) => {
                reason = Some(StopReason::CycleError(e.to_string()));
                break;
            }
        };
        vector::axpy(1.0, &c, &mut x);
        r = vector::sub(b, &a.spmv(&x));
        reason = mon.record(&x, vector::norm2(&r))?;
    }
    Ok(mon.finish(OuterMethod::Ir, x, reason.expect("loop exits with a reason")))
}

/// Conjugate gradients preconditioned by one V-cycle per iteration. The
/// recursively updated residual drives the stopping test.
pub fn pcg_solve(
    cfg: &CycleConfig,
    b: &[f64],
    stop: StoppingCriterion,
    reference: Option<&[f64]>,
) -> Result<SolveReport> {
    let a = cfg.a(cfg.finest());
    let mut mon = Monitor::new(a, b, stop, reference)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut reason = mon.record(&x, vector::norm2(&r))?;
    let mut p: Vec<f64> = Vec::new();
    let mut rz_old = 0.0;
    let mut ap = vec![0.0; n];
    while reason.is_none() {
        let z = match cfg.apply(&r, Arithmetic::Finite) {
            Ok(z) => z,
            Err(e) => {
                reason = Some(StopReason::CycleError(e.to_string()));
                break;
            }
        };
        let rz = vector::dot(&r, &z);
        if !(rz > 0.0) {
            return Err(Error::IndefinitePreconditioner(rz));
        }
        if p.is_empty() {
            p = z;
        } else {
            let beta = rz / rz_old;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        rz_old = rz;
        a.spmv_into(&p, &mut ap);
        let pap = vector::dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite(pap));
        }
        let alpha = rz / pap;
        vector::axpy(alpha, &p, &mut x);
        vector::axpy(-alpha, &ap, &mut r);
        reason = mon.record(&x, vector::norm2(&r))?;
    }
    Ok(mon.finish(OuterMethod::Pcg, x, reason.expect("loop exits with a reason")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{CycleOptions, IcFactors};
    use crate::fem::Fem1dSpec;
    use crate::hierarchy::{BuildOptions, MgHierarchy, PrecisionPlan};
    use crate::icsmooth::{ExactInverseSmoother, IcVariant, Smoother};
    use std::sync::Arc;

    #[test]
    fn reference_of_trivial_systems() {
        let b = vec![1.0, -2.0, 3.0];
        let id = CsrMatrix::identity(3);
        assert_eq!(reference_solution(&id, &b).unwrap().x, b);
        let d = CsrMatrix::diagonal_matrix(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let x = reference_solution(&d, &[1.0; 5]).unwrap().x;
        for (i, v) in x.iter().enumerate() {
            assert!((v - 1.0 / (i + 1) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn stagnation_detection() {
        let geo: Vec<f64> = (0..12).map(|k| 0.5f64.powi(k)).collect();
        assert_eq!(detect_stagnation(&geo), None);
        assert_eq!(detect_stagnation(&[0.3; 8]), Some(0.3));
        let mut h = vec![1.0, 0.5, 0.2, 0.1, 0.05];
        h.extend([2.5e-2; 6]);
        assert_eq!(detect_stagnation(&h), Some(2.5e-2));
        assert_eq!(detect_stagnation(&[1.0; 5]), None);
    }

    #[test]
    fn stop_kind_parsing() {
        assert_eq!("relres:1e-10".parse::<StopKind>().unwrap(), StopKind::RelResidual { tol: 1e-10 });
        assert_eq!("anorm:1e-5".parse::<StopKind>().unwrap(), StopKind::AbsAnormError { tol: 1e-5 });
        assert!("anorm:-1".parse::<StopKind>().is_err());
        assert!("foo:1".parse::<StopKind>().is_err());
    }

    fn exact_two_level() -> (MgHierarchy, CycleConfig) {
        let spec = Fem1dSpec::new(2, 3, 2).unwrap();
        let h = MgHierarchy::build_fem1d(&spec, &BuildOptions::default()).unwrap();
        let sm: Arc<dyn Smoother> = Arc::new(ExactInverseSmoother::new(h.a(1)).unwrap());
        let cfg = CycleConfig::new(&h, &PrecisionPlan::double(2), vec![None, Some(sm)], CycleOptions::default())
            .unwrap();
        (h, cfg)
    }

    #[test]
    fn exact_inner_solver_converges_in_one_step() {
        let (h, cfg) = exact_two_level();
        let b = h.rhs().unwrap().to_vec();
        let stop = StoppingCriterion::new(StopKind::RelResidual { tol: 1e-12 }, 10).unwrap();
        let rep = ir_solve(&cfg, &b, stop, None).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.history.len(), 2);
        let rep = pcg_solve(&cfg, &b, stop, None).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn ir_and_pcg_on_p5() {
        let spec = Fem1dSpec::new(5, 5, 5).unwrap();
        let h = MgHierarchy::build_fem1d(&spec, &BuildOptions::default()).unwrap();
        let b = h.rhs().unwrap().to_vec();
        let xref = reference_solution(h.a(4), &b).unwrap();
        // the residual of any double vector is floored near u * ‖A‖ ‖x‖ / ‖b‖
        let an = crate::sparse::spectral_norm_estimate(h.a(4), Default::default()).unwrap().value;
        let backward = xref.rel_residual * vector::norm2(&b) / (an * vector::norm2(&xref.x));
        assert!(backward < 1e-15, "{backward}");
        let f = IcFactors::build(&h, IcVariant::Ic0).unwrap();
        let cfg = CycleConfig::with_ic(&h, &PrecisionPlan::double(5), &f, true, CycleOptions::default()).unwrap();
        let stop = StoppingCriterion::new(StopKind::AbsAnormError { tol: 1e-5 }, 100).unwrap();
        let rep = ir_solve(&cfg, &b, stop, Some(&xref.x)).unwrap();
        assert!(rep.converged, "{:?}", rep.reason);
        let errs: Vec<f64> = rep.history.iter().map(|r| r.anorm_error.unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
        let sym = CycleOptions {
            smoothing: crate::cycle::Smoothing::Symmetric,
            ..Default::default()
        };
        let cfg = CycleConfig::with_ic(&h, &PrecisionPlan::double(5), &f, true, sym).unwrap();
        let stop = StoppingCriterion::new(StopKind::RelResidual { tol: 1e-10 }, 100).unwrap();
        let rep = pcg_solve(&cfg, &b, stop, Some(&xref.x)).unwrap();
        assert!(rep.converged);
        assert!(rep.final_rel_residual < 1e-9);
        let errs: Vec<f64> = rep.history.iter().map(|r| r.anorm_error.unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn anorm_criterion_requires_reference() {
        let (h, cfg) = exact_two_level();
        let b = h.rhs().unwrap().to_vec();
        let stop = StoppingCriterion::new(StopKind::AbsAnormError { tol: 1e-5 }, 10).unwrap();
        assert!(ir_solve(&cfg, &b, stop, None).is_err());
    }

    #[test]
    fn csv_has_schema_header() {
        let (h, cfg) = exact_two_level();
        let b = h.rhs().unwrap().to_vec();
        let stop = StoppingCriterion::new(StopKind::RelResidual { tol: 1e-12 }, 10).unwrap();
        let rep = ir_solve(&cfg, &b, stop, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        rep.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_SCHEMA));
        assert_eq!(lines.next(), Some("iteration,rel_residual,anorm_error"));
        assert_eq!(text.lines().count(), 2 + rep.history.len());
        rep.write_json(dir.path().join("r.json")).unwrap();
    }
}
