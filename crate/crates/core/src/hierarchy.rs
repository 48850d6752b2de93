//! Multigrid hierarchies: level matrices, prolongations, scaling, entry
//! filtering, per-level precisions and directory persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, DofOrdering, Fem1dSpec};
use crate::fparith::PrecisionSpec;
use crate::sparse::{read_matrix_market, read_vector, vector, write_matrix_market, write_vector, CsrMatrix};

/// One level `j`: `A_j`, and `P_j` (prolongation from `j-1` to `j`) when `j >= 1`.
#[derive(Clone, Debug)]
pub struct Level {
    pub a: Arc<CsrMatrix>,
    pub p: Option<Arc<CsrMatrix>>,
    /// Cumulative factor applied to the original `A_j`.
    pub scale: f64,
}

impl Level {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Precisions used on one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPrecision {
    /// `ε̇_j`: rounding of vectors and of the residual / transfer operations.
    pub dot: PrecisionSpec,
    /// `ε^R_j`: storage of the smoother factor.
    pub store: PrecisionSpec,
    /// `ε^S_j`: arithmetic inside the smoother's substitutions.
    pub solve: PrecisionSpec,
}

impl LevelPrecision {
    pub fn uniform(spec: PrecisionSpec) -> Self {
        LevelPrecision {
            dot: spec.clone(),
            store: spec.clone(),
            solve: spec,
        }
    }

    pub fn double() -> Self {
        Self::uniform(PrecisionSpec::double())
    }
}

/// Per-level precision assignment for levels `0..=J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPlan {
    levels: Vec<LevelPrecision>,
    relaxed: bool,
}

impl PrecisionPlan {
    /// Validated plan. Every level needs `ε^R_j >= ε^S_j >= ε̇_j`, and
    /// `ε̇_j <= ε̇_{j-1}` across levels.
    pub fn new(levels: Vec<LevelPrecision>) -> Result<Self> {
        Self::build(levels, false)
    }

    /// As [`PrecisionPlan::new`] but allows a smoother computing in a finer
    /// precision than the dot precision of its level (`ε^S_j < ε̇_j`); the
    /// smoother output is then rounded to `ε̇_j`.
    pub fn new_relaxed(levels: Vec<LevelPrecision>) -> Result<Self> {
        Self::build(levels, true)
    }

    fn build(levels: Vec<LevelPrecision>, relaxed: bool) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("precision plan needs a level".into()));
        }
        for (j, lp) in levels.iter().enumerate() {
            let (d, r, s) = (
                lp.dot.unit_roundoff(),
                lp.store.unit_roundoff(),
                lp.solve.unit_roundoff(),
            );
            if r < s {
                return Err(Error::Precondition(format!(
                    "level {j}: store precision {} is finer than solve precision {}",
                    lp.store, lp.solve
                )));
            }
            if !relaxed && s < d {
                return Err(Error::Precondition(format!(
                    "level {j}: solve precision {} is finer than dot precision {}",
                    lp.solve, lp.dot
                )));
            }
            if j > 0 && d > levels[j - 1].dot.unit_roundoff() {
                return Err(Error::Precondition(format!(
                    "level {j}: dot precision {} is coarser than level {} ({})",
                    lp.dot,
                    j - 1,
                    levels[j - 1].dot
                )));
            }
        }
        Ok(PrecisionPlan { levels, relaxed })
    }

    pub fn uniform(n_levels: usize, lp: LevelPrecision) -> Result<Self> {
        Self::new(vec![lp; n_levels])
    }

    pub fn uniform_relaxed(n_levels: usize, lp: LevelPrecision) -> Result<Self> {
        Self::new_relaxed(vec![lp; n_levels])
    }

    pub fn double(n_levels: usize) -> Self {
        Self::uniform(n_levels, LevelPrecision::double()).expect("double plan is valid")
    }

    pub fn levels(&self) -> &[LevelPrecision] {
        &self.levels
    }

    pub fn level(&self, j: usize) -> &LevelPrecision {
        &self.levels[j]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    /// Replace the finest-level precisions, keeping the ordering rules.
    pub fn with_finest(&self, lp: LevelPrecision) -> Result<Self> {
        let mut levels = self.levels.clone();
        *levels.last_mut().expect("nonempty") = lp;
        Self::build(levels, self.relaxed)
    }
}

/// Descriptive metadata carried alongside the matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HierarchyMeta {
    pub dim: usize,
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default)]
    pub coarse_elems: Option<usize>,
    #[serde(default)]
    pub ordering: Option<DofOrdering>,
    #[serde(default)]
    pub filter_a: Option<f64>,
    #[serde(default)]
    pub filter_p: Option<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Options for building the 1D FEM hierarchy.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub scale: bool,
    pub filter_a: Option<f64>,
    pub filter_p: Option<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            scale: true,
            filter_a: Some(5e-16),
            filter_p: Some(5e-12),
        }
    }
}

/// Levels `0..=J` of a geometric multigrid hierarchy.
#[derive(Clone, Debug)]
pub struct MgHierarchy {
    levels: Vec<Level>,
    meta: HierarchyMeta,
    rhs: Option<Arc<Vec<f64>>>,
    precisions: Option<PrecisionPlan>,
}

impl MgHierarchy {
    /// Assemble from matrices; `prolongations[j-1]` maps level `j-1` to `j`.
    pub fn new(
        matrices: Vec<CsrMatrix>,
        prolongations: Vec<CsrMatrix>,
        meta: HierarchyMeta,
    ) -> Result<Self> {
        let scales = vec![1.0; matrices.len()];
        Self::from_parts(matrices, prolongations, scales, meta)
    }

    fn from_parts(
        matrices: Vec<CsrMatrix>,
        prolongations: Vec<CsrMatrix>,
        scales: Vec<f64>,
        meta: HierarchyMeta,
    ) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidArgument("hierarchy needs at least one level".into()));
        }
        if prolongations.len() + 1 != matrices.len() {
            return Err(Error::dims(
                "prolongation count",
                matrices.len() - 1,
                prolongations.len(),
            ));
        }
        if scales.len() != matrices.len() {
            return Err(Error::dims("scale count", matrices.len(), scales.len()));
        }
        for a in &matrices {
            if !a.is_square() {
                return Err(Error::dims("square level matrix", a.nrows(), a.ncols()));
            }
        }
        for (j, p) in prolongations.iter().enumerate() {
            let (nf, nc) = (matrices[j + 1].nrows(), matrices[j].nrows());
            if p.nrows() != nf {
                return Err(Error::dims("prolongation rows", nf, p.nrows()));
            }
            if p.ncols() != nc {
                return Err(Error::dims("prolongation columns", nc, p.ncols()));
            }
            if nf <= nc {
                return Err(Error::InvalidArgument(format!(
                    "level {} has {nf} unknowns, not more than level {j} ({nc})",
                    j + 1
                )));
            }
        }
        let mut levels = Vec::with_capacity(matrices.len());
        let mut ps = prolongations.into_iter();
        for (j, (a, s)) in matrices.into_iter().zip(scales).enumerate() {
            levels.push(Level {
                a: Arc::new(a),
                p: if j == 0 { None } else { ps.next().map(Arc::new) },
                scale: s,
            });
        }
        Ok(MgHierarchy {
            levels,
            meta,
            rhs: None,
            precisions: None,
        })
    }

    /// 1D Poisson FEM hierarchy, optionally scaled and filtered. The
    /// manufactured load vector of the finest level is attached.
    pub fn build_fem1d(spec: &Fem1dSpec, opts: &BuildOptions) -> Result<Self> {
        spec.validate()?;
        let mut mats = Vec::with_capacity(spec.n_levels);
        let mut ps = Vec::with_capacity(spec.n_levels.saturating_sub(1));
        for j in 0..spec.n_levels {
            mats.push(fem::assemble_poisson_1d(spec, j)?);
            if j > 0 {
                ps.push(fem::prolongation_1d(spec, j - 1)?);
            }
        }
        let meta = HierarchyMeta {
            dim: 1,
            degree: Some(spec.degree),
            coarse_elems: Some(spec.n_elements_coarsest),
            ordering: Some(spec.ordering),
            filter_a: None,
            filter_p: None,
            notes: vec!["1D Poisson, homogeneous Dirichlet, equispaced Lagrange elements".into()],
        };
        let mut h = MgHierarchy::new(mats, ps, meta)?;
        h.rhs = Some(Arc::new(fem::manufactured_rhs_1d(spec, spec.n_levels - 1)?));
        if opts.scale {
            h = h.scale_hierarchy()?;
        }
        if opts.filter_a.is_some() || opts.filter_p.is_some() {
            h = h.filter(opts.filter_a, opts.filter_p);
        }
        Ok(h)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, j: usize) -> &Level {
        &self.levels[j]
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Index `J` of the finest level.
    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn a(&self, j: usize) -> &Arc<CsrMatrix> {
        &self.levels[j].a
    }

    /// `P_j`, for `j >= 1`.
    pub fn p(&self, j: usize) -> &Arc<CsrMatrix> {
        self.levels[j].p.as_ref().expect("prolongation exists for j >= 1")
    }

    pub fn dims(&self) -> Vec<usize> {
        self.levels.iter().map(Level::n).collect()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.scale).collect()
    }

    pub fn meta(&self) -> &HierarchyMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut HierarchyMeta {
        &mut self.meta
    }

    /// Right-hand side of the finest system (scaled with it), when known.
    pub fn rhs(&self) -> Option<&[f64]> {
        self.rhs.as_deref().map(|v| v.as_slice())
    }

    pub fn set_rhs(&mut self, b: Vec<f64>) -> Result<()> {
        let n = self.levels.last().unwrap().n();
        if b.len() != n {
            return Err(Error::dims("right-hand side", n, b.len()));
        }
        self.rhs = Some(Arc::new(b));
        Ok(())
    }

    pub fn precisions(&self) -> Option<&PrecisionPlan> {
        self.precisions.as_ref()
    }

    pub fn set_precisions(&mut self, plan: PrecisionPlan) -> Result<()> {
        if plan.len() != self.n_levels() {
            return Err(Error::dims("precision plan", self.n_levels(), plan.len()));
        }
        self.precisions = Some(plan);
        Ok(())
    }

    /// Levels `0..=j` as a hierarchy of their own, sharing matrix storage.
    /// The right-hand side is kept when `j` is the finest level, regenerated
    /// for 1D FEM hierarchies, and dropped otherwise.
    pub fn truncate(&self, j: usize) -> Result<Self> {
        if j >= self.n_levels() {
            return Err(Error::InvalidArgument(format!(
                "level {j} outside 0..{}",
                self.n_levels()
            )));
        }
        let rhs = if j == self.finest() {
            self.rhs.clone()
        } else {
            self.manufactured_rhs(j)?.map(Arc::new)
        };
        Ok(MgHierarchy {
            levels: self.levels[..=j].to_vec(),
            meta: self.meta.clone(),
            rhs,
            precisions: None,
        })
    }

    /// The 1D manufactured load vector of level `j`, scaled with the level
    /// (factor `sqrt(s_j)`), when the metadata describes a 1D FEM hierarchy.
    pub fn manufactured_rhs(&self, j: usize) -> Result<Option<Vec<f64>>> {
        let m = &self.meta;
        let (Some(degree), Some(coarse)) = (m.degree, m.coarse_elems) else {
            return Ok(None);
        };
        if m.dim != 1 {
            return Ok(None);
        }
        let spec = Fem1dSpec::new(degree, coarse, j + 1)?
            .with_ordering(m.ordering.unwrap_or_default());
        let b = fem::manufactured_rhs_1d(&spec, j)?;
        if b.len() != self.levels[j].n() {
            return Ok(None);
        }
        Ok(Some(vector::scale(self.levels[j].scale.sqrt(), &b)))
    }

    /// Relative Galerkin defect `‖P_jᵀ A_j P_j − A_{j−1}‖_F / ‖A_{j−1}‖_F`
    /// for `j = 1..=J` (index 0 of the result is level 1).
    pub fn galerkin_defects(&self) -> Result<Vec<f64>> {
        (1..self.n_levels())
            .map(|j| {
                let g = self.a(j).galerkin(self.p(j))?;
                let coarse = self.a(j - 1);
                let d = g.add_scaled(-1.0, coarse)?;
                Ok(d.frobenius_norm() / coarse.frobenius_norm())
            })
            .collect()
    }

    /// `s_j = 1 / max |(A_j)_{kl}|` for the current matrices.
    pub fn scale_factors(&self) -> Result<Vec<f64>> {
        self.levels
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let m = l.a.max_abs();
                if m == 0.0 {
                    Err(Error::InvalidArgument(format!("level {j} matrix is zero")))
                } else {
                    Ok(1.0 / m)
                }
            })
            .collect()
    }

    /// `Ā_j = s_j A_j`, `P̄_j = sqrt(s_{j−1} / s_j) P_j`; preserves the
    /// Galerkin relation. This is the symmetric scaling `x_j = D_j x̄_j` with
    /// `D_j = sqrt(s_j) I`, so an attached right-hand side becomes
    /// `sqrt(s_J) b` and `A`-norms of errors are unchanged.
    pub fn scale_hierarchy(&self) -> Result<Self> {
        let s = self.scale_factors()?;
        let mut levels = Vec::with_capacity(self.levels.len());
        for (j, l) in self.levels.iter().enumerate() {
            levels.push(Level {
                a: Arc::new(l.a.scale(s[j])),
                p: l
                    .p
                    .as_ref()
                    .map(|p| Arc::new(p.scale((s[j - 1] / s[j]).sqrt()))),
                scale: l.scale * s[j],
            });
        }
        let s_fine = *s.last().expect("nonempty");
        Ok(MgHierarchy {
            levels,
            meta: self.meta.clone(),
            rhs: self.rhs.as_ref().map(|b| Arc::new(vector::scale(s_fine.sqrt(), b))),
            precisions: self.precisions.clone(),
        })
    }

    /// Drop small entries of every `A_j` (threshold `tau_a`) and `P_j` (`tau_p`).
    pub fn filter(&self, tau_a: Option<f64>, tau_p: Option<f64>) -> Self {
        let levels = self
            .levels
            .iter()
            .map(|l| Level {
                a: match tau_a {
                    Some(t) => Arc::new(filter_entries(&l.a, t)),
                    None => l.a.clone(),
                },
                p: match (&l.p, tau_p) {
                    (Some(p), Some(t)) => Some(Arc::new(filter_entries(p, t))),
                    (p, _) => p.clone(),
                },
                scale: l.scale,
            })
            .collect();
        let mut meta = self.meta.clone();
        meta.filter_a = tau_a.or(meta.filter_a);
        meta.filter_p = tau_p.or(meta.filter_p);
        MgHierarchy {
            levels,
            meta,
            rhs: self.rhs.clone(),
            precisions: self.precisions.clone(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut a_files = Vec::new();
        let mut p_files = Vec::new();
        for j in 0..self.n_levels() {
            let name = format!("A_{j}.mtx");
            write_matrix_market(self.a(j), dir.join(&name))?;
            a_files.push(name);
            if j > 0 {
                let name = format!("P_{j}.mtx");
                write_matrix_market(self.p(j), dir.join(&name))?;
                p_files.push(name);
            }
        }
        let rhs = match &self.rhs {
            Some(b) => {
                let name = format!("b_{}.mtx", self.finest());
                write_vector(b, dir.join(&name))?;
                Some(name)
            }
            None => None,
        };
        let manifest = Manifest {
            levels: self.n_levels(),
            files: ManifestFiles {
                a: a_files,
                p: p_files,
                rhs,
            },
            scales: self.scales(),
            precisions: self.precisions.clone(),
            degree: self.meta.degree,
            dim: self.meta.dim,
            coarse_elems: self.meta.coarse_elems,
            ordering: self.meta.ordering,
            filter_a: self.meta.filter_a,
            filter_p: self.meta.filter_p,
            notes: self.meta.notes.clone(),
        };
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Load a saved hierarchy. Without a manifest, `A_0.mtx, A_1.mtx, …` and
    /// `P_1.mtx, …` are discovered by name and the scales default to one.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::MissingFile(dir.to_path_buf()));
        }
        let manifest_path = dir.join(MANIFEST);
        let manifest = if manifest_path.exists() {
            let text =
                fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            serde_json::from_str::<Manifest>(&text)?
        } else {
            Manifest::discover(dir)?
        };
        if manifest.files.a.len() != manifest.levels {
            return Err(Error::dims("manifest A files", manifest.levels, manifest.files.a.len()));
        }
        if manifest.files.p.len() + 1 != manifest.levels {
            return Err(Error::dims(
                "manifest P files",
                manifest.levels.saturating_sub(1),
                manifest.files.p.len(),
            ));
        }
        let read = |name: &String| -> Result<CsrMatrix> {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::MissingFile(path));
            }
            read_matrix_market(path)
        };
        let mats = manifest.files.a.iter().map(read).collect::<Result<Vec<_>>>()?;
        let ps = manifest.files.p.iter().map(read).collect::<Result<Vec<_>>>()?;
        let scales = if manifest.scales.is_empty() {
            vec![1.0; manifest.levels]
        } else {
            manifest.scales.clone()
        };
        let meta = HierarchyMeta {
            dim: manifest.dim,
            degree: manifest.degree,
            coarse_elems: manifest.coarse_elems,
            ordering: manifest.ordering,
            filter_a: manifest.filter_a,
            filter_p: manifest.filter_p,
            notes: manifest.notes.clone(),
        };
        let mut h = MgHierarchy::from_parts(mats, ps, scales, meta)?;
        if let Some(name) = &manifest.files.rhs {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::MissingFile(path));
            }
            h.set_rhs(read_vector(path)?)?;
        }
        if let Some(plan) = manifest.precisions {
            h.set_precisions(plan)?;
        }
        Ok(h)
    }
}

const MANIFEST: &str = "hierarchy.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ManifestFiles {
    #[serde(rename = "A")]
    a: Vec<String>,
    #[serde(rename = "P")]
    p: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rhs: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    levels: usize,
    files: ManifestFiles,
    #[serde(default)]
    scales: Vec<f64>,
    #[serde(default)]
    precisions: Option<PrecisionPlan>,
    #[serde(default)]
    degree: Option<usize>,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default)]
    coarse_elems: Option<usize>,
    #[serde(default)]
    ordering: Option<DofOrdering>,
    #[serde(default)]
    filter_a: Option<f64>,
    #[serde(default)]
    filter_p: Option<f64>,
    #[serde(default)]
    notes: Vec<String>,
}

fn default_dim() -> usize {
    1
}

impl Manifest {
    fn discover(dir: &Path) -> Result<Self> {
        let mut levels = 0;
        while dir.join(format!("A_{levels}.mtx")).exists() {
            levels += 1;
        }
        if levels == 0 {
            return Err(Error::MissingFile(dir.join(MANIFEST)));
        }
        let j = levels - 1;
        let rhs = [format!("b_{j}.mtx"), "b.mtx".to_string()]
            .into_iter()
            .find(|n| dir.join(n).exists());
        Ok(Manifest {
            levels,
            files: ManifestFiles {
                a: (0..levels).map(|j| format!("A_{j}.mtx")).collect(),
                p: (1..levels).map(|j| format!("P_{j}.mtx")).collect(),
                rhs,
            },
            scales: Vec::new(),
            precisions: None,
            degree: None,
            dim: 0,
            coarse_elems: None,
            ordering: None,
            filter_a: None,
            filter_p: None,
            notes: vec![format!("discovered in {}", PathBuf::from(dir).display())],
        })
    }
}

/// Remove entries with `|value| < tau`. A square matrix with a symmetric
/// pattern is filtered pairwise: `(i, j)` and `(j, i)` go together, only when
/// both are below the threshold.
pub fn filter_entries(k: &CsrMatrix, tau: f64) -> CsrMatrix {
    if !(tau > 0.0) {
        return k.clone();
    }
    let symmetric_pattern = k.is_square() && {
        let t = k.transpose();
        t.row_ptr() == k.row_ptr() && t.col_idx() == k.col_idx()
    };
    if symmetric_pattern {
        k.filter_pattern(|i, j, v| v.abs() >= tau || k.get(j, i).abs() >= tau)
    } else {
        k.filter_pattern(|_, _, v| v.abs() >= tau)
    }
}

/// Scale a right-hand side by `s_f`, the power of two nearest to `‖f‖∞`,
/// so the scaling is exact. A zero vector gives `s_f = 1`.
pub fn scale_rhs(f: &[f64]) -> (Vec<f64>, f64) {
    let m = vector::norm_inf(f);
    if m == 0.0 {
        return (f.to_vec(), 1.0);
    }
    let s = m.log2().round().exp2();
    (f.iter().map(|v| v / s).collect(), s)
}
