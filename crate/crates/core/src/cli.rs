//! Command-line front end: build hierarchies, run solves, sweep precisions,
//! evaluate bounds and summarize reports.
//!
//! Exit codes: 0 on success or convergence, 1 on errors (including usage
//! errors), 2 when a solve ends without converging.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    compute_level_constants, lambda_v_ic, threshold_precisions, write_json, CoarseModel,
    IcLevelEps, IcVBound, LevelConstants, PrecisionThresholds, XiDefinition,
};
use crate::cycle::{CoarseSolver, CycleConfig, CycleOptions, IcFactors, Smoothing};
use crate::drivers::{
    ir_solve, pcg_solve, reference_solution, OuterMethod, SolveReport, StopKind, StopReason,
    StoppingCriterion, CSV_SCHEMA,
};
use crate::error::{Error, Result};
use crate::fem::{DofOrdering, Fem1dSpec};
use crate::fparith::PrecisionSpec;
use crate::hierarchy::{BuildOptions, LevelPrecision, MgHierarchy, PrecisionPlan};
use crate::icsmooth::{DropRule, IcVariant};
use crate::sparse::{read_vector, PowerOptions};

/// Seed used when neither `--seed` nor `MGMP_SEED` is given.
pub const DEFAULT_SEED: u64 = 42;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Precisions of a V-cycle-IC variant named `dot-fact-store-solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    /// Residual, transfer, correction and coarsest-level solve.
    pub dot: PrecisionSpec,
    /// IC factorization.
    pub fact: PrecisionSpec,
    /// Storage of `L`.
    pub store: PrecisionSpec,
    /// Triangular solves.
    pub solve: PrecisionSpec,
    pub coarse: CoarseSolver,
    /// Accept a solve precision finer than the dot precision.
    pub relaxed: bool,
}

/// The six variants of the GPU study, all with uniform precisions on every
/// level.
pub const TABLE_VARIANTS: [&str; 6] = [
    "d-d-d-d", "d-d-s-s", "s-s-s-s", "d-s-h-sh", "s-s-h-sh", "h-s-h-sh",
];

impl VariantSpec {
    pub fn new(dot: PrecisionSpec, fact: PrecisionSpec, store: PrecisionSpec, solve: PrecisionSpec) -> Self {
        let name = format!("{dot}-{fact}-{store}-{solve}");
        VariantSpec {
            name,
            dot,
            fact,
            store,
            solve,
            coarse: CoarseSolver::Direct,
            relaxed: false,
        }
    }

    pub fn double() -> Self {
        let d = PrecisionSpec::double();
        Self::new(d.clone(), d.clone(), d.clone(), d)
    }

    /// All four precisions equal.
    pub fn uniform(spec: PrecisionSpec) -> Self {
        Self::new(spec.clone(), spec.clone(), spec.clone(), spec)
    }

    pub fn level_precision(&self) -> LevelPrecision {
        LevelPrecision {
            dot: self.dot.clone(),
            store: self.store.clone(),
            solve: self.solve.clone(),
        }
    }

    /// The same precisions on every level.
    pub fn plan(&self, n_levels: usize) -> Result<PrecisionPlan> {
        if self.relaxed {
            PrecisionPlan::uniform_relaxed(n_levels, self.level_precision())
        } else {
            PrecisionPlan::uniform(n_levels, self.level_precision())
        }
    }

    /// Factorization precision to emulate, `None` when it is double.
    pub fn fact_precision(&self) -> Option<&PrecisionSpec> {
        (!self.fact.is_exact_double()).then_some(&self.fact)
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    /// Four labels joined by `-`; `digits-N` and `bits-N` count as one label.
    /// A half-precision dot precision selects the inner CG coarse solver
    /// (tolerance `1e-4`, at most 100 iterations) and relaxes the ordering
    /// check, as a direct half-precision coarse solve is not available there.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        let mut labels = Vec::new();
        let mut i = 0;
        while i < parts.len() {
            if matches!(parts[i], "digits" | "bits") && i + 1 < parts.len() {
                labels.push(format!("{}-{}", parts[i], parts[i + 1]));
                i += 2;
            } else {
                labels.push(parts[i].to_string());
                i += 1;
            }
        }
        if labels.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "variant {s:?} must have four labels dot-fact-store-solve"
            )));
        }
        let p = |k: usize| labels[k].parse::<PrecisionSpec>();
        let mut v = VariantSpec::new(p(0)?, p(1)?, p(2)?, p(3)?);
        v.name = s.trim().to_string();
        if matches!(labels[0].as_str(), "h" | "half") {
            v.coarse = CoarseSolver::CgInner {
                tol: 1e-4,
                max_iter: 100,
            };
            v.relaxed = true;
        }
        Ok(v)
    }
}

#[derive(Parser, Debug)]
#[command(name = "mgmp", version, about = "Mixed-precision multigrid with incomplete Cholesky smoothing")]
pub struct Cli {
    /// RNG seed (overrides MGMP_SEED; default 42).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build, scale, filter and save a 1D FEM hierarchy.
    Build(BuildArgs),
    /// Solve the finest-level system with IR or PCG.
    Solve(SolveArgs),
    /// Search for the lowest precisions matching double-precision iteration counts.
    Sweep(SweepArgs),
    /// Evaluate level constants and finite precision error bounds.
    Bounds(BoundsArgs),
    /// Summarize a JSON report written by another command.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub degree: usize,
    /// Number of levels `J + 1`.
    #[arg(long)]
    pub levels: usize,
    #[arg(long, default_value_t = 5)]
    pub coarse_elems: usize,
    #[arg(long, default_value = "cellwise")]
    pub ordering: String,
    /// Leave the matrices unscaled.
    #[arg(long)]
    pub no_scale: bool,
    #[arg(long = "filter-A", alias = "filter-a", default_value_t = 5e-16)]
    pub filter_a: f64,
    #[arg(long = "filter-P", alias = "filter-p", default_value_t = 5e-12)]
    pub filter_p: f64,
    /// Keep every entry.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OuterArg {
    Ir,
    Pcg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SmootherArg {
    Ic0,
    Ict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SmoothingArg {
    Pre,
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CoarseArg {
    Direct,
    Cg,
}

/// Smoother selection shared by several commands.
#[derive(Args, Debug, Clone)]
pub struct SmootherOpts {
    #[arg(long, value_enum, default_value = "ic0")]
    pub smoother: SmootherArg,
    /// Drop tolerance of ICT.
    #[arg(long, default_value_t = 5e-3)]
    pub dpt: f64,
    /// ICT drop rule: column-norm or diagonal-scaled.
    #[arg(long, default_value = "column-norm")]
    pub drop_rule: String,
}

impl SmootherOpts {
    pub fn variant(&self) -> Result<IcVariant> {
        Ok(match self.smoother {
            SmootherArg::Ic0 => IcVariant::Ic0,
            SmootherArg::Ict => IcVariant::Ict {
                dpt: self.dpt,
                rule: self.drop_rule.parse::<DropRule>()?,
            },
        })
    }
}

/// Hierarchy source shared by several commands.
#[derive(Args, Debug, Clone)]
pub struct HierarchyOpts {
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Scale the loaded matrices (for hierarchies saved unscaled).
    #[arg(long)]
    pub scale: bool,
    /// Use levels `0..=J` only.
    #[arg(long = "finest")]
    pub finest: Option<usize>,
}

impl HierarchyOpts {
    pub fn load(&self) -> Result<MgHierarchy> {
        let mut h = MgHierarchy::load(&self.hierarchy)?;
        if self.scale {
            h = h.scale_hierarchy()?;
        }
        if let Some(j) = self.finest {
            h = h.truncate(j)?;
        }
        Ok(h)
    }
}

/// Precision selection: a variant name or explicit labels.
#[derive(Args, Debug, Clone)]
pub struct PrecisionOpts {
    /// Variant `dot-fact-store-solve`, e.g. d-d-s-s.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub prec_dot: Option<String>,
    #[arg(long)]
    pub prec_fact: Option<String>,
    #[arg(long)]
    pub prec_store: Option<String>,
    #[arg(long)]
    pub prec_solve: Option<String>,
    /// Accept a solve precision finer than the dot precision.
    #[arg(long)]
    pub relaxed_order: bool,
    #[arg(long, value_enum)]
    pub coarse: Option<CoarseArg>,
    #[arg(long, default_value_t = 1e-4)]
    pub coarse_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub coarse_max_iter: usize,
}

impl PrecisionOpts {
    pub fn variant(&self) -> Result<VariantSpec> {
        let explicit = [&self.prec_dot, &self.prec_fact, &self.prec_store, &self.prec_solve];
        let mut v = match &self.variant {
            Some(name) => {
                if explicit.iter().any(|p| p.is_some()) {
                    return Err(Error::InvalidArgument(
                        "--variant cannot be combined with --prec-* flags".into(),
                    ));
                }
                name.parse::<VariantSpec>()?
            }
            None => {
                let get = |p: &Option<String>, fallback: &PrecisionSpec| -> Result<PrecisionSpec> {
                    p.as_deref().map(str::parse).unwrap_or_else(|| Ok(fallback.clone()))
                };
                let d = PrecisionSpec::double();
                let dot = get(&self.prec_dot, &d)?;
                let store = get(&self.prec_store, &d)?;
                let solve = get(&self.prec_solve, &store)?;
                let fact = get(&self.prec_fact, &d)?;
                VariantSpec::new(dot, fact, store, solve)
            }
        };
        if self.relaxed_order {
            v.relaxed = true;
        }
        match self.coarse {
            Some(CoarseArg::Direct) => v.coarse = CoarseSolver::Direct,
            Some(CoarseArg::Cg) => {
                v.coarse = CoarseSolver::CgInner {
                    tol: self.coarse_tol,
                    max_iter: self.coarse_max_iter,
                }
            }
            None => {}
        }
        Ok(v)
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub hierarchy: HierarchyOpts,
    #[arg(long, value_enum, default_value = "ir")]
    pub outer: OuterArg,
    #[command(flatten)]
    pub smoother: SmootherOpts,
    #[command(flatten)]
    pub precision: PrecisionOpts,
    /// Pre-smoothing only, or pre- and post-smoothing (default: pre for IR,
    /// symmetric for PCG).
    #[arg(long, value_enum)]
    pub smoothing: Option<SmoothingArg>,
    /// Stopping rule: relres:TOL, anorm:TOL or relanorm:TOL.
    #[arg(long, default_value = "relres:1e-10")]
    pub stop: String,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// manufactured, ones, or a MatrixMarket vector file path.
    #[arg(long, default_value = "manufactured")]
    pub rhs: String,
    /// Disable scaling of smoother inputs by their infinity norm.
    #[arg(long)]
    pub no_rhs_scaling: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub hierarchy: HierarchyOpts,
    /// Finest levels to sweep, e.g. 2..10.
    #[arg(long = "J-range", alias = "j-range")]
    pub j_range: String,
    #[command(flatten)]
    pub smoother: SmootherOpts,
    #[arg(long, default_value = "anorm:1e-5")]
    pub stop: String,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 16)]
    pub digits_max: u32,
    #[arg(long)]
    pub no_rhs_scaling: bool,
    /// Summary CSV (J, DoF, baseline iterations, ḋ_min, d^S_min).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-digit iteration table CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub hierarchy: HierarchyOpts,
    #[command(flatten)]
    pub smoother: SmootherOpts,
    #[command(flatten)]
    pub precision: PrecisionOpts,
    /// Uniform precision of `digits` decimal digits instead of a variant.
    #[arg(long)]
    pub digits: Option<u32>,
    /// Target value of the V-cycle bound.
    #[arg(long, default_value_t = 1e-1)]
    pub budget: f64,
    /// inverse-norm-ratio or norm-ratio.
    #[arg(long, default_value = "inverse-norm-ratio")]
    pub xi: String,
    #[arg(long, default_value_t = 1e-4)]
    pub power_tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub power_max_iter: usize,
    /// Level constant table CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// JSON written by `solve --report`, `sweep --json` or `bounds --json`.
    pub input: PathBuf,
    /// Write the iteration history of a solve report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Seed from `--seed`, else `MGMP_SEED`, else [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("MGMP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("MGMP_SEED={v:?} is not an integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Parse `args` (including the program name), run and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    let seed = resolve_seed(cli.seed)?;
    match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Bounds(a) => cmd_bounds(&a, seed),
        Command::Report(a) => cmd_report(&a),
    }
}

pub fn cmd_build(args: &BuildArgs) -> Result<i32> {
    if args.dim != 1 {
        return Err(Error::InvalidArgument(format!(
            "only --dim 1 can be built; load other hierarchies from MatrixMarket files (got {})",
            args.dim
        )));
    }
    if args.levels == 0 {
        return Err(Error::InvalidArgument("--levels must be at least 1".into()));
    }
    let ordering = args.ordering.parse::<DofOrdering>()?;
    let spec = Fem1dSpec::new(args.degree, args.coarse_elems, args.levels)?.with_ordering(ordering);
    let opts = BuildOptions {
        scale: !args.no_scale,
        filter_a: (!args.no_filter).then_some(args.filter_a),
        filter_p: (!args.no_filter).then_some(args.filter_p),
    };
    let h = MgHierarchy::build_fem1d(&spec, &opts)?;
    h.save(&args.out)?;
    println!("{:>5} {:>10} {:>12}", "level", "dofs", "nnz(A)");
    for j in 0..h.n_levels() {
        println!("{:>5} {:>10} {:>12}", j, h.a(j).nrows(), h.a(j).nnz());
    }
    println!("saved to {}", args.out.display());
    Ok(EXIT_OK)
}

fn stopping(stop: &str, max_iter: usize) -> Result<StoppingCriterion> {
    StoppingCriterion::new(stop.parse::<StopKind>()?, max_iter)
}

/// Right-hand side from `manufactured`, `ones`, or a vector file.
pub fn resolve_rhs(h: &MgHierarchy, which: &str) -> Result<Vec<f64>> {
    let n = h.a(h.finest()).nrows();
    let b = match which {
        "manufactured" => match h.rhs() {
            Some(b) => b.to_vec(),
            None => h.manufactured_rhs(h.finest())?.ok_or_else(|| {
                Error::InvalidArgument(
                    "hierarchy carries no right-hand side; use --rhs ones or a vector file".into(),
                )
            })?,
        },
        "ones" => vec![1.0; n],
        path => read_vector(path)?,
    };
    if b.len() != n {
        return Err(Error::dims("right-hand side", n, b.len()));
    }
    Ok(b)
}

/// Cycle with IC smoothers for `variant` on every fine level.
pub fn build_cycle(
    h: &MgHierarchy,
    factors: &IcFactors,
    variant: &VariantSpec,
    smoothing: Smoothing,
    use_rhs_scaling: bool,
) -> Result<CycleConfig> {
    let plan = variant.plan(h.n_levels())?;
    let smoothers = factors.smoothers(&plan, variant.fact_precision(), use_rhs_scaling)?;
    CycleConfig::new(
        h,
        &plan,
        smoothers,
        CycleOptions {
            coarse: variant.coarse,
            smoothing,
        },
    )
}

/// Exit code for a finished solve.
pub fn solve_exit_code(report: &SolveReport) -> i32 {
    match report.reason {
        StopReason::Converged => EXIT_OK,
        StopReason::CycleError(_) => EXIT_ERROR,
        StopReason::Stagnated | StopReason::MaxIterations | StopReason::Diverged => EXIT_NOT_CONVERGED,
    }
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let h = args.hierarchy.load()?;
    let variant = args.precision.variant()?;
    let factors = IcFactors::build(&h, args.smoother.variant()?)?;
    let outer = match args.outer {
        OuterArg::Ir => OuterMethod::Ir,
        OuterArg::Pcg => OuterMethod::Pcg,
    };
    let smoothing = match (args.smoothing, outer) {
        (Some(SmoothingArg::Pre), _) | (None, OuterMethod::Ir) => Smoothing::Pre,
        (Some(SmoothingArg::Symmetric), _) | (None, OuterMethod::Pcg) => Smoothing::Symmetric,
    };
    let cfg = build_cycle(&h, &factors, &variant, smoothing, !args.no_rhs_scaling)?;
    let b = resolve_rhs(&h, &args.rhs)?;
    let stop = stopping(&args.stop, args.max_iter)?;
    let reference = if stop.kind.needs_reference() {
        Some(reference_solution(h.a(h.finest()), &b)?.x)
    } else {
        None
    };
    let report = match outer {
        OuterMethod::Ir => ir_solve(&cfg, &b, stop, reference.as_deref())?,
        OuterMethod::Pcg => pcg_solve(&cfg, &b, stop, reference.as_deref())?,
    };
    if let Some(p) = &args.report {
        report.write_json(p)?;
    }
    if let Some(p) = &args.csv {
        report.write_csv(p)?;
    }
    print_solve_summary(&report, Some(&variant.name));
    Ok(solve_exit_code(&report))
}

fn print_solve_summary(r: &SolveReport, variant: Option<&str>) {
    let method = match r.method {
        OuterMethod::Ir => "ir",
        OuterMethod::Pcg => "pcg",
    };
    if let Some(v) = variant {
        println!("variant      {v}");
    }
    println!("method       {method}");
    println!("iterations   {}", r.iterations);
    println!("outcome      {}", reason_label(&r.reason));
    println!("rel residual {:.3e}", r.final_rel_residual);
    if let Some(e) = r.history.last().and_then(|h| h.anorm_error) {
        println!("A-norm error {e:.3e}");
    }
    if let Some(p) = r.plateau {
        println!("plateau      {p:.3e}");
    }
}

fn reason_label(r: &StopReason) -> String {
    match r {
        StopReason::Converged => "converged".into(),
        StopReason::MaxIterations => "iteration limit".into(),
        StopReason::Diverged => "diverged".into(),
        StopReason::Stagnated => "stagnated".into(),
        StopReason::CycleError(e) => format!("cycle error: {e}"),
    }
}

/// Outcome of one solve in a precision sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub digits: u32,
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    /// Last recorded A-norm error, kept for audit only.
    pub final_anorm_error: Option<f64>,
}

/// Sweep outcome for one finest level `J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    #[serde(rename = "J")]
    pub j: usize,
    pub dofs: usize,
    pub iterations_double: usize,
    pub baseline_converged: bool,
    /// Smallest `ḋ` with `ε̇ = ε^R = ε^S` matching the double iteration count.
    pub d_dot_min: Option<u32>,
    /// Smallest `d^S = d^R` matching it with `ε̇` fixed at `ḋ_min`.
    pub d_s_min: Option<u32>,
    pub phase1: Vec<SweepPoint>,
    pub phase2: Vec<SweepPoint>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub j_range: RangeInclusive<usize>,
    pub variant: IcVariant,
    pub stop: StoppingCriterion,
    pub digits_max: u32,
    pub use_rhs_scaling: bool,
}

/// Parse `a..b` or `a..=b` (both inclusive) or a single level.
pub fn parse_j_range(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || Error::InvalidArgument(format!("bad level range {s:?}, expected a..b"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

struct SweepLevel {
    h: MgHierarchy,
    factors: IcFactors,
    b: Vec<f64>,
    reference: Option<Vec<f64>>,
}

impl SweepLevel {
    fn run(&self, lp: LevelPrecision, cfg: &SweepConfig, digits: u32) -> SweepPoint {
        let failed = |e: Error| SweepPoint {
            digits,
            iterations: 0,
            converged: false,
            reason: StopReason::CycleError(e.to_string()),
            final_anorm_error: None,
        };
        let cycle = PrecisionPlan::uniform(self.h.n_levels(), lp).and_then(|plan| {
            let sm = self.factors.smoothers(&plan, None, cfg.use_rhs_scaling)?;
            CycleConfig::new(&self.h, &plan, sm, CycleOptions::default())
        });
        let cycle = match cycle {
            Ok(c) => c,
            Err(e) => return failed(e),
        };
        match ir_solve(&cycle, &self.b, cfg.stop, self.reference.as_deref()) {
            Ok(r) => SweepPoint {
                digits,
                iterations: r.iterations,
                converged: r.converged,
                final_anorm_error: r.history.last().and_then(|h| h.anorm_error),
                reason: r.reason,
            },
            Err(e) => failed(e),
        }
    }
}

/// Evaluate `f` on ascending digits in batches of the pool size and stop
/// after the first batch containing a success. Returns every evaluated
/// point and the first successful digit count.
fn ascending_search(
    digits: RangeInclusive<u32>,
    f: impl Fn(u32) -> SweepPoint + Sync,
    success: impl Fn(&SweepPoint) -> bool,
) -> (Vec<SweepPoint>, Option<u32>) {
    let all: Vec<u32> = digits.collect();
    let batch = rayon::current_num_threads().max(1);
    let mut points = Vec::new();
    for chunk in all.chunks(batch) {
        let res: Vec<SweepPoint> = chunk.par_iter().map(|&d| f(d)).collect();
        let hit = res.iter().find(|p| success(p)).map(|p| p.digits);
        points.extend(res);
        if hit.is_some() {
            return (points, hit);
        }
    }
    (points, None)
}

/// Precision sweep over finest levels `cfg.j_range` of `h` with IR and
/// uniform precisions on all levels.
///
/// For each `J`, the double-precision run sets the target iteration count.
/// Phase 1 scans `d = 1, 2, …` with `ε̇ = ε^R = ε^S` of `d` decimal digits
/// and keeps the first match as `ḋ_min`. Phase 2 fixes `ε̇` at `ḋ_min` and
/// scans `d^S = d^R` the same way.
pub fn run_sweep(h: &MgHierarchy, cfg: &SweepConfig) -> Result<Vec<SweepResult>> {
    if *cfg.j_range.end() > h.finest() {
        return Err(Error::InvalidArgument(format!(
            "level range ends at {} but the hierarchy has finest level {}",
            cfg.j_range.end(),
            h.finest()
        )));
    }
    if *cfg.j_range.start() == 0 {
        return Err(Error::InvalidArgument("sweeps need J >= 1".into()));
    }
    let mut out = Vec::new();
    for j in cfg.j_range.clone() {
        out.push(sweep_level(h, j, cfg)?);
    }
    Ok(out)
}

fn sweep_level(h: &MgHierarchy, j: usize, cfg: &SweepConfig) -> Result<SweepResult> {
    let hj = h.truncate(j)?;
    let dofs = hj.a(j).nrows();
    let mut result = SweepResult {
        j,
        dofs,
        iterations_double: 0,
        baseline_converged: false,
        d_dot_min: None,
        d_s_min: None,
        phase1: vec![],
        phase2: vec![],
        error: None,
    };
    let b = resolve_rhs(&hj, "manufactured")?;
    let factors = match IcFactors::build(&hj, cfg.variant) {
        Ok(f) => f,
        Err(e) => {
            result.error = Some(e.to_string());
            return Ok(result);
        }
    };
    let reference = if cfg.stop.kind.needs_reference() {
        Some(reference_solution(hj.a(j), &b)?.x)
    } else {
        None
    };
    let level = SweepLevel {
        h: hj,
        factors,
        b,
        reference,
    };
    let base = level.run(LevelPrecision::double(), cfg, 16);
    result.iterations_double = base.iterations;
    result.baseline_converged = base.converged;
    if !base.converged {
        result.error = Some(format!("double baseline did not converge: {}", reason_label(&base.reason)));
        return Ok(result);
    }
    let target = base.iterations;
    let matches = |p: &SweepPoint| p.converged && p.iterations == target;
    let digits = |d: u32| PrecisionSpec::from_decimal_digits(d);
    let (p1, d_dot) = ascending_search(
        1..=cfg.digits_max,
        |d| match digits(d) {
            Ok(s) => level.run(LevelPrecision::uniform(s), cfg, d),
            Err(e) => SweepPoint {
                digits: d,
                iterations: 0,
                converged: false,
                reason: StopReason::CycleError(e.to_string()),
                final_anorm_error: None,
            },
        },
        matches,
    );
    result.phase1 = p1;
    result.d_dot_min = d_dot;
    if let Some(dd) = d_dot {
        let dot = digits(dd)?;
        let (p2, d_s) = ascending_search(
            1..=dd,
            |d| {
                let s = digits(d).expect("digits within range");
                level.run(
                    LevelPrecision {
                        dot: dot.clone(),
                        store: s.clone(),
                        solve: s,
                    },
                    cfg,
                    d,
                )
            },
            matches,
        );
        result.phase2 = p2;
        result.d_s_min = d_s;
        if let Some(ds) = d_s {
            if ds > dd {
                eprintln!("warning: J={j}: d_s_min {ds} exceeds d_dot_min {dd}");
            }
        }
    }
    Ok(result)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<File> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{CSV_SCHEMA}").map_err(|e| Error::io(path, e))?;
    Ok(f)
}

/// Summary CSV with one row per `J`.
pub fn write_sweep_csv(results: &[SweepResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["J", "dofs", "iterations_double", "d_dot_min", "d_s_min"])?;
    for r in results {
        w.write_record([
            r.j.to_string(),
            r.dofs.to_string(),
            r.iterations_double.to_string(),
            opt(r.d_dot_min),
            opt(r.d_s_min),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Every evaluated sweep point, keyed by `(J, phase, digits)`.
pub fn write_sweep_table(results: &[SweepResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["J", "phase", "digits", "iterations", "converged", "final_anorm_error"])?;
    for r in results {
        for (phase, pts) in [(1, &r.phase1), (2, &r.phase2)] {
            for p in pts {
                w.write_record([
                    r.j.to_string(),
                    phase.to_string(),
                    p.digits.to_string(),
                    p.iterations.to_string(),
                    p.converged.to_string(),
                    p.final_anorm_error.map(|e| format!("{e:e}")).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let h = args.hierarchy.load()?;
    let cfg = SweepConfig {
        j_range: parse_j_range(&args.j_range)?,
        variant: args.smoother.variant()?,
        stop: stopping(&args.stop, args.max_iter)?,
        digits_max: args.digits_max,
        use_rhs_scaling: !args.no_rhs_scaling,
    };
    let results = run_sweep(&h, &cfg)?;
    println!("{:>3} {:>8} {:>6} {:>6} {:>5}", "J", "dofs", "iters", "ddot", "dS");
    for r in &results {
        println!(
            "{:>3} {:>8} {:>6} {:>6} {:>5}{}",
            r.j,
            r.dofs,
            r.iterations_double,
            opt(r.d_dot_min),
            opt(r.d_s_min),
            r.error.as_deref().map(|e| format!("  ({e})")).unwrap_or_default()
        );
    }
    if let Some(p) = &args.out {
        write_sweep_csv(&results, p)?;
    }
    if let Some(p) = &args.table {
        write_sweep_table(&results, p)?;
    }
    if let Some(p) = &args.json {
        write_json(&results, p)?;
    }
    Ok(EXIT_OK)
}

/// Everything `bounds` computes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub variant: String,
    pub smoother: IcVariant,
    pub xi: XiDefinition,
    pub constants: Vec<LevelConstants>,
    pub bound: IcVBound,
    pub budget: f64,
    pub within_budget: bool,
    pub thresholds: PrecisionThresholds,
}

/// Level constants and the IC V-cycle bound for `variant` on `h`.
pub fn evaluate_bounds(
    h: &MgHierarchy,
    ic: IcVariant,
    variant: &VariantSpec,
    xi: XiDefinition,
    budget: f64,
    opts: PowerOptions,
) -> Result<BoundsReport> {
    let factors = IcFactors::build(h, ic)?;
    let constants = compute_level_constants(h, Some(&factors), opts)?;
    let plan = variant.plan(h.n_levels())?;
    let coarse = CoarseModel::for_plan(&plan, variant.coarse);
    let bound = lambda_v_ic(&constants, &IcLevelEps::from_plan(&plan), &coarse, xi)?;
    let thresholds = threshold_precisions(&constants, budget, variant.coarse, xi)?;
    Ok(BoundsReport {
        variant: variant.name.clone(),
        smoother: ic,
        xi,
        within_budget: bound.violations.is_empty() && bound.breakdown.total < budget,
        constants,
        bound,
        budget,
        thresholds,
    })
}

/// Level constant table, one row per level.
pub fn write_constants_csv(constants: &[LevelConstants], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "level", "n", "norm_a", "abs_norm_a", "norm_ainv", "kappa_sqrt", "kappa_bar_a", "m_a",
        "norm_p", "abs_norm_p", "mbar_p", "xi", "xi_alt", "mbar_l", "norm_linv_sq", "kappa_bar_l",
        "flags",
    ])?;
    let e = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for c in constants {
        let ic = c.ic.as_ref();
        w.write_record([
            c.level.to_string(),
            c.n.to_string(),
            format!("{:e}", c.norm_a),
            format!("{:e}", c.abs_norm_a),
            format!("{:e}", c.norm_ainv),
            format!("{:e}", c.kappa_sqrt),
            format!("{:e}", c.kappa_bar_a),
            c.m_a.to_string(),
            e(c.norm_p),
            e(c.abs_norm_p),
            opt(c.mbar_p),
            e(c.xi),
            e(c.xi_alt),
            opt(ic.map(|i| i.mbar_l)),
            e(ic.map(|i| i.norm_linv_sq)),
            e(ic.map(|i| i.kappa_bar_l)),
            c.flags.join("; "),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_bounds(args: &BoundsArgs, seed: u64) -> Result<i32> {
    let h = args.hierarchy.load()?;
    let variant = match args.digits {
        Some(d) => {
            let mut v = VariantSpec::uniform(PrecisionSpec::from_decimal_digits(d)?);
            if let Some(CoarseArg::Cg) = args.precision.coarse {
                v.coarse = CoarseSolver::CgInner {
                    tol: args.precision.coarse_tol,
                    max_iter: args.precision.coarse_max_iter,
                };
            }
            v
        }
        None => args.precision.variant()?,
    };
    let opts = PowerOptions {
        tol: args.power_tol,
        max_iter: args.power_max_iter,
        seed,
    };
    let xi = args.xi.parse::<XiDefinition>()?;
    let report = evaluate_bounds(&h, args.smoother.variant()?, &variant, xi, args.budget, opts)?;
    print_bounds(&report);
    if let Some(p) = &args.csv {
        write_constants_csv(&report.constants, p)?;
    }
    if let Some(p) = &args.json {
        write_json(&report, p)?;
    }
    Ok(EXIT_OK)
}

fn print_bounds(r: &BoundsReport) {
    println!("variant {} with {}", r.variant, r.smoother);
    println!(
        "{:>5} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "level", "n", "kappa^1/2", "kbar_L", "|Linv|^2", "smoother", "dot"
    );
    let terms = &r.bound.breakdown.levels;
    for c in &r.constants {
        let t = terms.iter().find(|t| t.level == c.level);
        let ic = c.ic.as_ref();
        let f = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>5} {:>8} {:>10.3e} {:>10} {:>10} {:>10} {:>10}",
            c.level,
            c.n,
            c.kappa_sqrt,
            f(ic.map(|i| i.kappa_bar_l)),
            f(ic.map(|i| i.norm_linv_sq)),
            f(t.map(|t| t.smoother)),
            f(t.map(|t| t.dot)),
        );
        for flag in &c.flags {
            println!("      level {}: {flag}", c.level);
        }
    }
    let b = &r.bound.breakdown;
    println!("Lambda_0 {:.3e}  smoother {:.3e}  dot {:.3e}", b.coarse, b.smoother, b.dot);
    println!(
        "Lambda_V {:.3e} {} budget {:.3e}",
        b.total,
        if r.within_budget { "<" } else { ">=" },
        r.budget
    );
    for v in &r.bound.violations {
        println!("hypothesis violated: {v}");
    }
    let bits = |t: Option<u32>| {
        t.map(|t| format!("{t} bits ({:.1} digits)", PrecisionThresholds::digits(t)))
            .unwrap_or_else(|| "none".into())
    };
    println!("threshold dot precision       {}", bits(r.thresholds.dot_bits));
    println!("threshold smoothing precision {}", bits(r.thresholds.smoothing_bits));
}

pub fn cmd_report(args: &ReportArgs) -> Result<i32> {
    let path = &args.input;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(r) = serde_json::from_str::<SolveReport>(&text) {
        print_solve_summary(&r, None);
        if let Some(c) = &args.csv {
            r.write_csv(c)?;
        }
        return Ok(EXIT_OK);
    }
    if args.csv.is_some() {
        return Err(Error::InvalidArgument("--csv applies to solve reports only".into()));
    }
    if let Ok(r) = serde_json::from_str::<Vec<SweepResult>>(&text) {
        for s in &r {
            println!(
                "J={} dofs={} iterations={} ddot_min={} dS_min={}",
                s.j,
                s.dofs,
                s.iterations_double,
                opt(s.d_dot_min),
                opt(s.d_s_min)
            );
        }
        return Ok(EXIT_OK);
    }
    let r: BoundsReport = serde_json::from_str(&text)?;
    print_bounds(&r);
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_parse() {
        for name in TABLE_VARIANTS {
            let v: VariantSpec = name.parse().unwrap();
            assert_eq!(v.name, name);
            v.plan(3).unwrap();
        }
        let v: VariantSpec = "h-s-h-sh".parse().unwrap();
        assert!(matches!(v.coarse, CoarseSolver::CgInner { tol, max_iter: 100 } if tol == 1e-4));
        assert!(v.relaxed);
        let v: VariantSpec = "digits-6-d-digits-3-bits-9".parse().unwrap();
        assert_eq!(v.dot.significand_bits(), 20);
        assert_eq!(v.solve.significand_bits(), 9);
        assert!(v.fact_precision().is_none());
        assert!("d-d-d".parse::<VariantSpec>().is_err());
        assert!("d-d-q-d".parse::<VariantSpec>().is_err());
    }

    #[test]
    fn ordering_violation_is_rejected_unless_relaxed() {
        let mut v: VariantSpec = "h-d-d-d".parse().unwrap();
        v.relaxed = false;
        assert!(v.plan(2).is_err());
        let v: VariantSpec = "s-s-d-d".parse().unwrap();
        assert!(v.plan(2).is_err());
    }

    #[test]
    fn ranges_and_seeds() {
        assert_eq!(parse_j_range("2..10").unwrap(), 2..=10);
        assert_eq!(parse_j_range("3..=4").unwrap(), 3..=4);
        assert_eq!(parse_j_range("5").unwrap(), 5..=5);
        assert!(parse_j_range("4..2").is_err());
        assert_eq!(resolve_seed(Some(7)).unwrap(), 7);
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["mgmp", "build", "--levels", "0", "--out", "/nonexistent"]), EXIT_ERROR);
        assert_eq!(run(["mgmp", "frobnicate"]), EXIT_ERROR);
        assert_eq!(run(["mgmp", "--help"]), EXIT_OK);
    }

    #[test]
    fn small_sweep_finds_thresholds() {
        let spec = Fem1dSpec::new(5, 5, 4).unwrap();
        let h = MgHierarchy::build_fem1d(&spec, &BuildOptions::default()).unwrap();
        let cfg = SweepConfig {
            j_range: 2..=3,
            variant: IcVariant::Ic0,
            stop: StoppingCriterion::new(StopKind::AbsAnormError { tol: 1e-5 }, 200).unwrap(),
            digits_max: 16,
            use_rhs_scaling: true,
        };
        let res = run_sweep(&h, &cfg).unwrap();
        assert_eq!(res.len(), 2);
        for r in &res {
            assert!(r.baseline_converged);
            let (dd, ds) = (r.d_dot_min.unwrap(), r.d_s_min.unwrap());
            assert!(ds <= dd);
            assert_eq!(r.phase1.last().unwrap().digits, dd);
            assert!(r.phase1.iter().all(|p| p.digits <= dd));
        }
    }
}
