//! C ABI for the `mgmp` library.
//!
//! Objects are passed as opaque handles created by `*_new`/`*_build`/`*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`MgmpStatus`]; on failure the message is available from
//! [`mgmp_last_error_message`] on the same thread. Panics are caught at the
//! boundary and reported as [`MgmpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mgmp::cli::{build_cycle, VariantSpec};
use mgmp::cycle::{Arithmetic, CycleConfig, IcFactors, Smoothing};
use mgmp::drivers::{ir_solve, pcg_solve, reference_solution, SolveReport, StopKind, StopReason, StoppingCriterion};
use mgmp::fem::Fem1dSpec;
use mgmp::hierarchy::{BuildOptions, MgHierarchy};
use mgmp::icsmooth::IcVariant;
use mgmp::{Error, PrecisionSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MgmpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Precondition = 4,
    Breakdown = 5,
    Io = 6,
    Parse = 7,
    Overflow = 8,
    Panic = 9,
}

/// Smoother on the fine levels.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MgmpSmoother {
    Ic0 = 0,
    Ict = 1,
}

/// Why an outer iteration stopped.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MgmpStopReason {
    Converged = 0,
    MaxIterations = 1,
    Diverged = 2,
    Stagnated = 3,
    CycleError = 4,
}

/// Summary of an IR or PCG solve.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MgmpSolveSummary {
    pub iterations: usize,
    pub converged: bool,
    pub reason: MgmpStopReason,
    pub final_rel_residual: f64,
    /// Plateau of the monitored quantity, or NaN when none was detected.
    pub plateau: f64,
}

/// Opaque multigrid hierarchy.
pub struct MgmpHierarchy(MgHierarchy);

/// Opaque V-cycle with IC smoothing bound to a hierarchy snapshot.
pub struct MgmpSolver {
    cfg: CycleConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> MgmpStatus {
    match e {
        Error::InvalidArgument(_) | Error::InvalidStructure(_) => MgmpStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => MgmpStatus::DimensionMismatch,
        Error::Precondition(_) | Error::IndefinitePreconditioner(_) | Error::NotPositiveDefinite(_) => {
            MgmpStatus::Precondition
        }
        Error::Breakdown { .. } => MgmpStatus::Breakdown,
        Error::Io { .. } | Error::MissingFile(_) => MgmpStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => MgmpStatus::Parse,
        Error::Overflow { .. } => MgmpStatus::Overflow,
    }
}

struct Fail(MgmpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MgmpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MgmpStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MgmpStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MgmpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MgmpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn hier<'a>(h: *const MgmpHierarchy) -> Result<&'a MgHierarchy, Fail> {
    h.as_ref().map(|h| &h.0).ok_or_else(|| null("hierarchy"))
}

unsafe fn solver<'a>(s: *const MgmpSolver) -> Result<&'a MgmpSolver, Fail> {
    s.as_ref().ok_or_else(|| null("solver"))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mgmp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Build a scaled and filtered 1D Poisson hierarchy of degree `degree` with
/// `coarse_elems` elements on level 0 and `n_levels` levels.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mgmp_hierarchy_build_fem1d(
    degree: usize,
    coarse_elems: usize,
    n_levels: usize,
    scale: bool,
    out: *mut *mut MgmpHierarchy,
) -> MgmpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = Fem1dSpec::new(degree, coarse_elems, n_levels)?;
        let opts = BuildOptions {
            scale,
            ..BuildOptions::default()
        };
        let h = MgHierarchy::build_fem1d(&spec, &opts)?;
        out.write(Box::into_raw(Box::new(MgmpHierarchy(h))));
        Ok(())
    })
}

/// Load a hierarchy directory of MatrixMarket files.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn mgmp_hierarchy_load(dir: *const c_char, out: *mut *mut MgmpHierarchy) -> MgmpStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let h = MgHierarchy::load(dir)?;
        out.write(Box::into_raw(Box::new(MgmpHierarchy(h))));
        Ok(())
    })
}

/// Save a hierarchy to a directory.
///
/// # Safety
/// `h` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mgmp_hierarchy_save(h: *const MgmpHierarchy, dir: *const c_char) -> MgmpStatus {
    guard(|| {
        let h = hier(h)?;
        let dir = str_arg(dir, "dir")?;
        h.save(dir)?;
        Ok(())
    })
}

/// Release a hierarchy. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mgmp_hierarchy_free(h: *mut MgmpHierarchy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of levels `J + 1`.
///
/// # Safety
/// `h` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mgmp_hierarchy_num_levels(h: *const MgmpHierarchy, out: *mut usize) -> MgmpStatus {
    guard(|| write_out(out, hier(h)?.n_levels(), "out"))
}

/// Number of unknowns on level `level`.
///
/// # Safety
/// `h` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mgmp_hierarchy_level_dim(
    h: *const MgmpHierarchy,
    level: usize,
    out: *mut usize,
) -> MgmpStatus {
    guard(|| {
        let h = hier(h)?;
        if level >= h.n_levels() {
            return Err(Fail(
                MgmpStatus::InvalidArgument,
                format!("level {level} out of range 0..{}", h.n_levels()),
            ));
        }
        write_out(out, h.a(level).nrows(), "out")
    })
}

/// Copy the finest-level right-hand side into `out` (length `n`).
///
/// # Safety
/// `h` must be a live handle; `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mgmp_hierarchy_rhs(h: *const MgmpHierarchy, out: *mut f64, n: usize) -> MgmpStatus {
    guard(|| {
        let h = hier(h)?;
        let b = h
            .rhs()
            .ok_or_else(|| Fail(MgmpStatus::InvalidArgument, "hierarchy has no right-hand side".into()))?;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                context: "rhs",
                expected: b.len(),
                found: n,
            }
            .into());
        }
        out_slice(out, n, "out")?.copy_from_slice(b);
        Ok(())
    })
}

/// Create a V-cycle with IC smoothing for the variant named
/// `dot-fact-store-solve` (e.g. `"d-d-s-s"`). `dpt` is used by ICT only;
/// `symmetric` adds post-smoothing.
///
/// # Safety
/// `h` must be a live handle; `variant` a NUL-terminated string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mgmp_solver_new(
    h: *const MgmpHierarchy,
    variant: *const c_char,
    smoother: MgmpSmoother,
    dpt: f64,
    symmetric: bool,
    out: *mut *mut MgmpSolver,
) -> MgmpStatus {
    guard(|| {
        let h = hier(h)?;
        let v: VariantSpec = str_arg(variant, "variant")?.parse()?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ic = match smoother {
            MgmpSmoother::Ic0 => IcVariant::Ic0,
            MgmpSmoother::Ict => IcVariant::ict(dpt),
        };
        let factors = IcFactors::build(h, ic)?;
        let smoothing = if symmetric { Smoothing::Symmetric } else { Smoothing::Pre };
        let cfg = build_cycle(h, &factors, &v, smoothing, true)?;
        out.write(Box::into_raw(Box::new(MgmpSolver { cfg })));
        Ok(())
    })
}

/// Release a solver. Null is ignored.
///
/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mgmp_solver_free(s: *mut MgmpSolver) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Finest-level dimension of a solver.
///
/// # Safety
/// `s` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mgmp_solver_dim(s: *const MgmpSolver, out: *mut usize) -> MgmpStatus {
    guard(|| {
        let s = solver(s)?;
        write_out(out, s.cfg.a(s.cfg.finest()).nrows(), "out")
    })
}

/// One finite precision V-cycle: `out = V(f)`.
///
/// # Safety
/// `s` must be a live handle; `f` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mgmp_solver_vcycle(s: *const MgmpSolver, f: *const f64, out: *mut f64, n: usize) -> MgmpStatus {
    guard(|| {
        let s = solver(s)?;
        let f = slice_arg(f, n, "f")?;
        let y = s.cfg.apply(f, Arithmetic::Finite)?;
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "vcycle output",
                expected: y.len(),
                found: n,
            }
            .into());
        }
        out_slice(out, n, "out")?.copy_from_slice(&y);
        Ok(())
    })
}

#[derive(Clone, Copy)]
enum Outer {
    Ir,
    Pcg,
}

unsafe fn outer_solve(
    s: *const MgmpSolver,
    b: *const f64,
    x: *mut f64,
    n: usize,
    stop: *const c_char,
    max_iter: usize,
    summary: *mut MgmpSolveSummary,
    method: Outer,
) -> MgmpStatus {
    guard(|| {
        let s = solver(s)?;
        let b = slice_arg(b, n, "b")?;
        let kind: StopKind = str_arg(stop, "stop")?.parse()?;
        let crit = StoppingCriterion::new(kind, max_iter)?;
        let a = s.cfg.a(s.cfg.finest());
        let reference = if kind.needs_reference() {
            Some(reference_solution(a, b)?.x)
        } else {
            None
        };
        let rep: SolveReport = match method {
            Outer::Ir => ir_solve(&s.cfg, b, crit, reference.as_deref())?,
            Outer::Pcg => pcg_solve(&s.cfg, b, crit, reference.as_deref())?,
        };
        out_slice(x, n, "x")?.copy_from_slice(&rep.x);
        let reason = match rep.reason {
            StopReason::Converged => MgmpStopReason::Converged,
            StopReason::MaxIterations => MgmpStopReason::MaxIterations,
            StopReason::Diverged => MgmpStopReason::Diverged,
            StopReason::Stagnated => MgmpStopReason::Stagnated,
            StopReason::CycleError(_) => MgmpStopReason::CycleError,
        };
        if let StopReason::CycleError(msg) = &rep.reason {
            set_error(msg.clone());
        }
        let sum = MgmpSolveSummary {
            iterations: rep.iterations,
            converged: rep.converged,
            reason,
            final_rel_residual: rep.final_rel_residual,
            plateau: rep.plateau.unwrap_or(f64::NAN),
        };
        if !summary.is_null() {
            summary.write(sum);
        }
        Ok(())
    })
}

/// Iterative refinement with one V-cycle per step from `x = 0`. `stop` is
/// `relres:TOL`, `anorm:TOL` or `relanorm:TOL`. The solution is written to
/// `x`; `summary` may be null.
///
/// # Safety
/// `s` must be a live handle; `b` and `x` must hold `n` doubles; `stop` a
/// NUL-terminated string; `summary` null or valid.
#[no_mangle]
pub unsafe extern "C" fn mgmp_solver_ir(
    s: *const MgmpSolver,
    b: *const f64,
    x: *mut f64,
    n: usize,
    stop: *const c_char,
    max_iter: usize,
    summary: *mut MgmpSolveSummary,
) -> MgmpStatus {
    outer_solve(s, b, x, n, stop, max_iter, summary, Outer::Ir)
}

/// Conjugate gradients preconditioned by one V-cycle per iteration. Same
/// arguments as [`mgmp_solver_ir`].
///
/// # Safety
/// As for [`mgmp_solver_ir`].
#[no_mangle]
pub unsafe extern "C" fn mgmp_solver_pcg(
    s: *const MgmpSolver,
    b: *const f64,
    x: *mut f64,
    n: usize,
    stop: *const c_char,
    max_iter: usize,
    summary: *mut MgmpSolveSummary,
) -> MgmpStatus {
    outer_solve(s, b, x, n, stop, max_iter, summary, Outer::Pcg)
}

/// Round `x` to the format named `label` (`d`, `s`, `h`, `digits-N`,
/// `bits-N`).
///
/// # Safety
/// `label` must be a NUL-terminated string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mgmp_round_scalar(x: f64, label: *const c_char, out: *mut f64) -> MgmpStatus {
    guard(|| {
        let spec: PrecisionSpec = str_arg(label, "label")?.parse()?;
        write_out(out, spec.round(x)?, "out")
    })
}

/// Unit roundoff `2^{-t}` of the format named `label`.
///
/// # Safety
/// `label` must be a NUL-terminated string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mgmp_unit_roundoff(label: *const c_char, out: *mut f64) -> MgmpStatus {
    guard(|| {
        let spec: PrecisionSpec = str_arg(label, "label")?.parse()?;
        write_out(out, spec.unit_roundoff(), "out")
    })
}
