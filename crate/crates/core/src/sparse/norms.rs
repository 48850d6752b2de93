//! Power-iteration norm estimates and the energy norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vector::{dot, normalize};
use super::{CsrMatrix, InverseOperator};
use crate::error::{Error, Result};

/// A symmetric positive semidefinite linear operator.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}

/// `Kᵀ K` for a possibly rectangular `K`.
pub struct NormalOperator<'a> {
    k: &'a CsrMatrix,
    kt: CsrMatrix,
}

impl<'a> NormalOperator<'a> {
    pub fn new(k: &'a CsrMatrix) -> Self {
        NormalOperator {
            k,
            kt: k.transpose(),
        }
    }
}

impl SymmetricOperator for NormalOperator<'_> {
    fn dim(&self) -> usize {
        self.k.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let kx = self.k.spmv(x);
        self.kt.spmv_into(&kx, y);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: 1e-4,
            max_iter: 500,
            seed: 0x5eed,
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration from a seeded random unit vector. Converged when the Rayleigh
/// quotient changes by at most `tol` relative.
pub fn norm2_estimate(op: &dyn SymmetricOperator, opts: PowerOptions) -> Result<NormEstimate> {
    let n = op.dim();
    if n == 0 {
        return Ok(NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power iteration tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut lambda = 0.0;
    for it in 1..=opts.max_iter {
        op.apply(&x, &mut y);
        let next = dot(&x, &y);
        std::mem::swap(&mut x, &mut y);
        if normalize(&mut x) == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        if it > 1 && (next - lambda).abs() <= opts.tol * next.abs() {
            return Ok(NormEstimate {
                value: next,
                iterations: it,
                converged: true,
            });
        }
        lambda = next;
    }
    Ok(NormEstimate {
        value: lambda,
        iterations: opts.max_iter,
        converged: false,
    })
}

fn sqrt_estimate(e: NormEstimate) -> NormEstimate {
    NormEstimate {
        value: e.value.max(0.0).sqrt(),
        ..e
    }
}

/// `‖K‖₂` via power iteration on `KᵀK`.
pub fn spectral_norm_estimate(k: &CsrMatrix, opts: PowerOptions) -> Result<NormEstimate> {
    norm2_estimate(&NormalOperator::new(k), opts).map(sqrt_estimate)
}

/// `‖|K|‖₂`, the norm of the entrywise absolute value.
pub fn abs_norm2_estimate(k: &CsrMatrix, opts: PowerOptions) -> Result<NormEstimate> {
    spectral_norm_estimate(&k.abs(), opts)
}

/// `‖A^{-1}‖₂` for SPD `A`.
pub fn inverse_norm_estimate(a: &CsrMatrix, opts: PowerOptions) -> Result<NormEstimate> {
    let inv = InverseOperator::new(a)?;
    norm2_estimate(&inv, opts)
}

/// Energy norm `sqrt(vᵀ A v)`.
pub fn a_norm(v: &[f64], a: &CsrMatrix) -> Result<f64> {
    if a.ncols() != v.len() {
        return Err(Error::dims("a_norm", a.ncols(), v.len()));
    }
    if a.nrows() != v.len() {
        return Err(Error::dims("a_norm", a.nrows(), v.len()));
    }
    let e = dot(&a.spmv(v), v);
    if e < 0.0 {
        return Err(Error::NotPositiveDefinite(e));
    }
    Ok(e.sqrt())
}
