//! Continuous Lagrange finite elements for the 1D Poisson problem
//! `-u'' = f` on (0, 1) with homogeneous Dirichlet conditions.
//!
//! Level `j` uses `2^j * n_elements_coarsest` uniform elements of degree `p`
//! with equispaced nodes. Boundary nodes are eliminated, so a level has
//! `p * n_elements - 1` unknowns.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Numbering of the free nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DofOrdering {
    /// Element by element, left to right: the right vertex of the element
    /// (unless it is on the boundary), then its interior nodes.
    #[default]
    Cellwise,
    /// Interior mesh vertices left to right, then the element-interior nodes
    /// element by element (left to right inside each element).
    VerticesFirst,
    /// All free nodes left to right by coordinate.
    Coordinate,
}

impl std::str::FromStr for DofOrdering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cellwise" => Ok(DofOrdering::Cellwise),
            "vertices-first" => Ok(DofOrdering::VerticesFirst),
            "coordinate" => Ok(DofOrdering::Coordinate),
            other => Err(Error::InvalidArgument(format!("unknown DoF ordering {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fem1dSpec {
    pub degree: usize,
    pub n_elements_coarsest: usize,
    pub n_levels: usize,
    #[serde(default)]
    pub ordering: DofOrdering,
}

impl Fem1dSpec {
    pub fn new(degree: usize, n_elements_coarsest: usize, n_levels: usize) -> Result<Self> {
        let spec = Fem1dSpec {
            degree,
            n_elements_coarsest,
            n_levels,
            ordering: DofOrdering::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_ordering(mut self, ordering: DofOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.degree) {
            return Err(Error::InvalidArgument(format!(
                "degree must lie in 1..=8, got {}",
                self.degree
            )));
        }
        if self.n_elements_coarsest == 0 {
            return Err(Error::InvalidArgument("need at least one coarse element".into()));
        }
        if self.n_levels == 0 || self.n_levels > 24 {
            return Err(Error::InvalidArgument(format!(
                "number of levels must lie in 1..=24, got {}",
                self.n_levels
            )));
        }
        if self.degree * self.n_elements_coarsest < 2 {
            return Err(Error::InvalidArgument(
                "coarsest level has no free nodes".into(),
            ));
        }
        Ok(())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level >= self.n_levels {
            return Err(Error::InvalidArgument(format!(
                "level {level} outside 0..{}",
                self.n_levels
            )));
        }
        Ok(())
    }

    pub fn n_elements(&self, level: usize) -> usize {
        self.n_elements_coarsest << level
    }

    pub fn n_dofs(&self, level: usize) -> usize {
        self.degree * self.n_elements(level) - 1
    }

    /// Free-DoF index of global node `g` (0..=p*ne), or `None` on the boundary.
    pub fn dof_of_node(&self, level: usize, g: usize) -> Option<usize> {
        let p = self.degree;
        let ne = self.n_elements(level);
        if g == 0 || g == p * ne {
            return None;
        }
        Some(match self.ordering {
            DofOrdering::Coordinate => g - 1,
            DofOrdering::Cellwise => {
                let (e, k) = (g / p, g % p);
                if k == 0 {
                    (e - 1) * p
                } else if e + 1 < ne {
                    e * p + k
                } else {
                    e * p + k - 1
                }
            }
            DofOrdering::VerticesFirst => {
                let (e, k) = (g / p, g % p);
                if k == 0 {
                    e - 1
                } else {
                    (ne - 1) + e * (p - 1) + (k - 1)
                }
            }
        })
    }

    /// Coordinates of the free nodes in DoF order.
    pub fn dof_coordinates(&self, level: usize) -> Vec<f64> {
        let p = self.degree;
        let ne = self.n_elements(level);
        let total = (p * ne) as f64;
        let mut x = vec![0.0; self.n_dofs(level)];
        for g in 1..p * ne {
            let d = self.dof_of_node(level, g).expect("interior node");
            x[d] = g as f64 / total;
        }
        x
    }
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one quadrature point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Value of the `k`-th equispaced Lagrange basis function of degree `p` at `x`.
pub fn lagrange_value(p: usize, k: usize, x: f64) -> f64 {
    let xk = k as f64 / p as f64;
    (0..=p)
        .filter(|&l| l != k)
        .map(|l| {
            let xl = l as f64 / p as f64;
            (x - xl) / (xk - xl)
        })
        .product()
}

/// Derivative of the `k`-th equispaced Lagrange basis function at `x`.
pub fn lagrange_derivative(p: usize, k: usize, x: f64) -> f64 {
    let xk = k as f64 / p as f64;
    let mut total = 0.0;
    for m in (0..=p).filter(|&m| m != k) {
        let xm = m as f64 / p as f64;
        let mut term = 1.0 / (xk - xm);
        for l in (0..=p).filter(|&l| l != k && l != m) {
            let xl = l as f64 / p as f64;
            term *= (x - xl) / (xk - xl);
        }
        total += term;
    }
    total
}

/// Reference stiffness matrix `∫₀¹ φ_i' φ_j'`.
pub fn element_stiffness(p: usize) -> Result<Vec<Vec<f64>>> {
    if !(1..=8).contains(&p) {
        return Err(Error::InvalidArgument(format!("degree must lie in 1..=8, got {p}")));
    }
    let (xq, wq) = gauss_legendre(p);
    let mut k = vec![vec![0.0; p + 1]; p + 1];
    let d: Vec<Vec<f64>> = (0..=p)
        .map(|i| xq.iter().map(|&x| lagrange_derivative(p, i, x)).collect())
        .collect();
    for i in 0..=p {
        for j in i..=p {
            let s: f64 = (0..xq.len()).map(|q| wq[q] * d[i][q] * d[j][q]).sum();
            k[i][j] = s;
            k[j][i] = s;
        }
    }
    Ok(k)
}

/// Global stiffness matrix on level `level`, boundary rows and columns removed.
pub fn assemble_poisson_1d(spec: &Fem1dSpec, level: usize) -> Result<CsrMatrix> {
    spec.validate()?;
    spec.check_level(level)?;
    let p = spec.degree;
    let ne = spec.n_elements(level);
    let h = 1.0 / ne as f64;
    let kref = element_stiffness(p)?;
    let n = spec.n_dofs(level);
    let mut trip = Vec::with_capacity(ne * (p + 1) * (p + 1));
    for e in 0..ne {
        for a in 0..=p {
            let Some(da) = spec.dof_of_node(level, e * p + a) else {
                continue;
            };
            for b in 0..=p {
                let Some(db) = spec.dof_of_node(level, e * p + b) else {
                    continue;
                };
                trip.push((da, db, kref[a][b] / h));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

/// Exact integer-ratio value of coarse basis `k` at fine offset `m` (in
/// units of half a coarse node spacing, `0 <= m <= 2p`).
fn embedded_basis_value(p: usize, k: usize, m: usize) -> f64 {
    let mut num: i128 = 1;
    let mut den: i128 = 1;
    for l in (0..=p).filter(|&l| l != k) {
        num *= m as i128 - 2 * l as i128;
        den *= 2 * k as i128 - 2 * l as i128;
    }
    num as f64 / den as f64
}

/// Prolongation from level `coarse` to level `coarse + 1`: entry `(f, c)` is
/// the value of coarse basis function `c` at fine node `f`.
pub fn prolongation_1d(spec: &Fem1dSpec, coarse: usize) -> Result<CsrMatrix> {
    spec.validate()?;
    spec.check_level(coarse + 1)?;
    let p = spec.degree;
    let ne_c = spec.n_elements(coarse);
    let fine = coarse + 1;
    let mut trip = Vec::new();
    for g in 1..2 * ne_c * p {
        let fd = spec.dof_of_node(fine, g).expect("interior node");
        let e = (g / (2 * p)).min(ne_c - 1);
        let m = g - 2 * p * e;
        for k in 0..=p {
            let v = embedded_basis_value(p, k, m);
            if v == 0.0 {
                continue;
            }
            if let Some(cd) = spec.dof_of_node(coarse, e * p + k) {
                trip.push((fd, cd, v));
            }
        }
    }
    CsrMatrix::from_triplets(spec.n_dofs(fine), spec.n_dofs(coarse), &trip)
}

/// Manufactured solution `u(x) = x (x - 1) sin(2πx)`.
pub fn manufactured_solution(x: f64) -> f64 {
    x * (x - 1.0) * (2.0 * PI * x).sin()
}

/// `f = -u''` for [`manufactured_solution`].
pub fn manufactured_source(x: f64) -> f64 {
    let (s, c) = (2.0 * PI * x).sin_cos();
    -(2.0 * s + 4.0 * PI * (2.0 * x - 1.0) * c - 4.0 * PI * PI * x * (x - 1.0) * s)
}

/// Load vector `∫ f φ_i` with `p + 2` Gauss points per element.
pub fn load_vector_1d(spec: &Fem1dSpec, level: usize, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    spec.validate()?;
    spec.check_level(level)?;
    let p = spec.degree;
    let ne = spec.n_elements(level);
    let h = 1.0 / ne as f64;
    let (xq, wq) = gauss_legendre(p + 2);
    let phi: Vec<Vec<f64>> = (0..=p)
        .map(|k| xq.iter().map(|&x| lagrange_value(p, k, x)).collect())
        .collect();
    let mut b = vec![0.0; spec.n_dofs(level)];
    for e in 0..ne {
        let x0 = e as f64 * h;
        let fq: Vec<f64> = xq.iter().map(|&x| f(x0 + h * x)).collect();
        for k in 0..=p {
            if let Some(d) = spec.dof_of_node(level, e * p + k) {
                let s: f64 = (0..xq.len()).map(|q| wq[q] * fq[q] * phi[k][q]).sum();
                b[d] += h * s;
            }
        }
    }
    Ok(b)
}

/// Load vector of the manufactured problem on `level`.
pub fn manufactured_rhs_1d(spec: &Fem1dSpec, level: usize) -> Result<Vec<f64>> {
    load_vector_1d(spec, level, manufactured_source)
}
