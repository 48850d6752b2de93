//! Simulated finite-precision arithmetic.
//!
//! Values are carried as `f64` and rounded to a binary format with `t`
//! significand bits (round to nearest, ties to even) after every scalar
//! operation. Sums, products and quotients are rounded *correctly*: the
//! `f64` intermediate is paired with its exact error term (two-sum, FMA
//! residual) whenever the intermediate lands on a rounding tie, so no
//! double-rounding artefacts leak into the simulated format.
//!
//! A [`PrecisionSpec`] may carry an exponent range. Without one the range is
//! unbounded (as wide as `f64`); with one, values below the subnormal
//! threshold flush to zero and values above the largest finite number raise
//! [`Error::Overflow`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rounding {
    #[default]
    NearestEven,
}

/// A simulated binary floating-point format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionSpec {
    significand_bits: u32,
    max_exponent: Option<i32>,
    min_exponent: Option<i32>,
    rounding: Rounding,
    label: String,
}

impl PrecisionSpec {
    /// Format with `t` significand bits (implicit bit included) and no exponent clamp.
    pub fn with_bits(t: u32) -> Result<Self> {
        if !(1..=53).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "significand bits must lie in 1..=53, got {t}"
            )));
        }
        Ok(PrecisionSpec {
            significand_bits: t,
            max_exponent: None,
            min_exponent: None,
            rounding: Rounding::NearestEven,
            label: if t == 53 {
                "d".to_string()
            } else {
                format!("bits-{t}")
            },
        })
    }

    /// Format with `t` bits and IEEE-style exponent limits `emin..=emax`
    /// (normal numbers satisfy `2^emin <= |x| < 2^(emax+1)`).
    pub fn with_range(t: u32, emin: i32, emax: i32, label: impl Into<String>) -> Result<Self> {
        if emin >= emax {
            return Err(Error::InvalidArgument(format!(
                "empty exponent range {emin}..={emax}"
            )));
        }
        if emin < -1022 || emax > 1023 {
            return Err(Error::InvalidArgument(format!(
                "exponent range {emin}..={emax} exceeds the carrier format"
            )));
        }
        let mut spec = Self::with_bits(t)?;
        spec.min_exponent = Some(emin);
        spec.max_exponent = Some(emax);
        spec.label = label.into();
        Ok(spec)
    }

    pub fn double() -> Self {
        Self::with_bits(53).expect("53 bits is valid")
    }

    pub fn single() -> Self {
        Self::with_range(24, -126, 127, "s").expect("binary32 is valid")
    }

    pub fn half() -> Self {
        Self::with_range(11, -14, 15, "h").expect("binary16 is valid")
    }

    /// Binary format approximating `d` decimal digits: `t = ceil(d log2 10)`,
    /// clamped to 53, unbounded exponent.
    pub fn from_decimal_digits(d: u32) -> Result<Self> {
        if !(1..=16).contains(&d) {
            return Err(Error::InvalidArgument(format!(
                "decimal digits must lie in 1..=16, got {d}"
            )));
        }
        let t = ((d as f64) * std::f64::consts::LOG2_10).ceil() as u32;
        let mut spec = Self::with_bits(t.min(53))?;
        spec.label = format!("digits-{d}");
        Ok(spec)
    }

    pub fn significand_bits(&self) -> u32 {
        self.significand_bits
    }

    pub fn max_exponent(&self) -> Option<i32> {
        self.max_exponent
    }

    pub fn min_exponent(&self) -> Option<i32> {
        self.min_exponent
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Unit roundoff `2^-t`.
    pub fn unit_roundoff(&self) -> f64 {
        pow2(-(self.significand_bits as i32))
    }

    pub fn is_exact_double(&self) -> bool {
        self.significand_bits == 53 && self.max_exponent.is_none()
    }

    /// Largest finite value, when the exponent range is bounded.
    pub fn max_finite(&self) -> Option<f64> {
        self.max_exponent.map(|emax| {
            let t = self.significand_bits as i32;
            (2.0 - pow2(1 - t)) * pow2(emax)
        })
    }

    /// True when every value of `coarser` is a value of `self`.
    pub fn refines(&self, coarser: &PrecisionSpec) -> bool {
        if self.significand_bits < coarser.significand_bits {
            return false;
        }
        let lo_ok = match (self.min_exponent, coarser.min_exponent) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => {
                // the smallest subnormal of `coarser` must be on our grid
                a - self.significand_bits as i32 <= b - coarser.significand_bits as i32
            }
        };
        let hi_ok = match (self.max_exponent, coarser.max_exponent) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a >= b,
        };
        lo_ok && hi_ok
    }

    pub fn rounder(&self) -> Rounder {
        let t = self.significand_bits;
        let exact = self.is_exact_double();
        Rounder {
            t,
            emin: self.min_exponent.unwrap_or(i32::MIN),
            max_finite: self.max_finite().unwrap_or(f64::MAX),
            exact,
            exact_products: 2 * t <= 53,
        }
    }

    /// Round one scalar, signalling overflow for clamped formats.
    pub fn round(&self, x: f64) -> Result<f64> {
        round_scalar(x, self)
    }
}

impl fmt::Display for PrecisionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for PrecisionSpec {
    type Err = Error;

    /// Accepts `d`/`double`, `s`/`single`, `h`/`half`, `sh` (the solve side of
    /// a single-half mix, i.e. single), `digits-N` and `bits-N`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "d" | "double" => return Ok(Self::double()),
            "s" | "single" | "sh" => return Ok(Self::single()),
            "h" | "half" => return Ok(Self::half()),
            _ => {}
        }
        let parse_n = |rest: &str| -> Result<u32> {
            rest.parse::<u32>()
                .map_err(|_| Error::InvalidArgument(format!("bad precision label {s:?}")))
        };
        if let Some(rest) = s.strip_prefix("digits-") {
            return Self::from_decimal_digits(parse_n(rest)?);
        }
        if let Some(rest) = s.strip_prefix("bits-") {
            return Self::with_bits(parse_n(rest)?);
        }
        Err(Error::InvalidArgument(format!("unknown precision label {s:?}")))
    }
}

#[inline]
pub(crate) fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

#[inline]
fn ldexp(x: f64, k: i32) -> f64 {
    if (-1022..=1023).contains(&k) {
        x * pow2(k)
    } else {
        let half = k / 2;
        x * pow2(half) * pow2(k - half)
    }
}

/// Hot-path rounding kernel derived from a [`PrecisionSpec`].
///
/// Overflowing results come back as `±inf`; the vector-level functions in
/// this module turn those into [`Error::Overflow`].
#[derive(Clone, Copy, Debug)]
pub struct Rounder {
    t: u32,
    emin: i32,
    max_finite: f64,
    exact: bool,
    exact_products: bool,
}

impl Rounder {
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    #[inline]
    pub fn round(&self, x: f64) -> f64 {
        self.round_with(x, || 0.0)
    }

    /// Round `x`, where the exact value is `x + tail` with `tail` below half
    /// an `f64` ulp. `tail` is only evaluated when `x` sits on a tie.
    #[inline]
    fn round_with(&self, x: f64, tail: impl FnOnce() -> f64) -> f64 {
        if self.exact || x == 0.0 || !x.is_finite() {
            return x;
        }
        let biased = ((x.to_bits() >> 52) & 0x7ff) as i32;
        let mut e = if biased == 0 {
            x.abs().log2().floor() as i32
        } else {
            biased - 1023
        };
        if e < self.emin {
            e = self.emin;
        }
        let q = e - (self.t as i32 - 1);
        let y = ldexp(x, -q);
        let mut r = y.round_ties_even();
        if (y - y.trunc()).abs() == 0.5 {
            let tl = tail();
            if tl != 0.0 {
                r = if (tl > 0.0) == (x > 0.0) {
                    y.trunc() + y.signum()
                } else {
                    y.trunc()
                };
            }
        }
        let out = ldexp(r, q);
        if out.abs() > self.max_finite {
            f64::INFINITY.copysign(out)
        } else {
            out
        }
    }

    #[inline]
    pub fn add(&self, a: f64, b: f64) -> f64 {
        let s = a + b;
        self.round_with(s, || {
            let bb = s - a;
            (a - (s - bb)) + (b - bb)
        })
    }

    #[inline]
    pub fn sub(&self, a: f64, b: f64) -> f64 {
        self.add(a, -b)
    }

    /// Product of two representable operands.
    #[inline]
    pub fn mul(&self, a: f64, b: f64) -> f64 {
        let p = a * b;
        if self.exact_products {
            self.round(p)
        } else {
            self.round_with(p, || a.mul_add(b, -p))
        }
    }

    #[inline]
    pub fn div(&self, a: f64, b: f64) -> f64 {
        let q = a / b;
        self.round_with(q, || {
            let rem = -q.mul_add(b, -a);
            rem / b
        })
    }

    /// Dot product of a sparse row with `w`, ascending column order, rounding
    /// after every multiply and add.
    #[inline]
    pub fn sparse_dot(&self, cols: &[usize], vals: &[f64], w: &[f64]) -> f64 {
        if self.exact {
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * w[c];
            }
            return s;
        }
        let mut s = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            let p = self.mul(v, w[c]);
            s = self.add(s, p);
        }
        s
    }
}

fn overflow(value: f64, spec: &PrecisionSpec) -> Error {
    Error::Overflow {
        value,
        label: spec.label().to_string(),
    }
}

fn check_finite(out: &[f64], input_hint: f64, spec: &PrecisionSpec) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(overflow(input_hint, spec))
    }
}

/// Nearest value of `spec` to `x` (ties to even).
pub fn round_scalar(x: f64, spec: &PrecisionSpec) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite input {x}")));
    }
    let r = spec.rounder().round(x);
    if r.is_finite() {
        Ok(r)
    } else {
        Err(overflow(x, spec))
    }
}

pub fn round_vector(v: &[f64], spec: &PrecisionSpec) -> Result<Vec<f64>> {
    let r = spec.rounder();
    let out: Vec<f64> = v.iter().map(|&x| r.round(x)).collect();
    check_finite(&out, max_abs(v), spec)?;
    Ok(out)
}

pub(crate) fn round_in_place(v: &mut [f64], r: &Rounder) {
    if r.is_exact() {
        return;
    }
    for x in v.iter_mut() {
        *x = r.round(*x);
    }
}

/// Entrywise rounding; the sparsity pattern is kept even where entries
/// become zero.
pub fn round_matrix(k: &CsrMatrix, spec: &PrecisionSpec) -> Result<CsrMatrix> {
    let r = spec.rounder();
    let values: Vec<f64> = k.values().iter().map(|&x| r.round(x)).collect();
    check_finite(&values, max_abs(k.values()), spec)?;
    Ok(k.with_values(values))
}

pub fn rounded_add(v: &[f64], w: &[f64], spec: &PrecisionSpec) -> Result<Vec<f64>> {
    if v.len() != w.len() {
        return Err(Error::dims("rounded_add", v.len(), w.len()));
    }
    let mut out = vec![0.0; v.len()];
    rounded_add_into(v, w, &spec.rounder(), &mut out);
    check_finite(&out, max_abs(v) + max_abs(w), spec)?;
    Ok(out)
}

pub(crate) fn rounded_add_into(v: &[f64], w: &[f64], r: &Rounder, out: &mut [f64]) {
    for ((o, &a), &b) in out.iter_mut().zip(v).zip(w) {
        *o = r.add(a, b);
    }
}

fn check_model(m: usize, extra: usize, spec: &PrecisionSpec, what: &str) -> Result<()> {
    let u = spec.unit_roundoff();
    let c = (m + extra) as f64 * u;
    if c >= 1.0 {
        return Err(Error::Precondition(format!(
            "{what}: (m + {extra}) * eps = {c} >= 1 for m = {m}, eps = {u:e}"
        )));
    }
    Ok(())
}

/// `K w` with per-scalar rounding in `spec`.
pub fn rounded_spmv(k: &CsrMatrix, w: &[f64], spec: &PrecisionSpec) -> Result<Vec<f64>> {
    if k.ncols() != w.len() {
        return Err(Error::dims("rounded_spmv", k.ncols(), w.len()));
    }
    check_model(k.max_nnz_row(), 1, spec, "rounded_spmv")?;
    let mut out = vec![0.0; k.nrows()];
    rounded_spmv_into(k, w, &spec.rounder(), &mut out);
    check_finite(&out, max_abs(w), spec)?;
    Ok(out)
}

pub(crate) fn rounded_spmv_into(k: &CsrMatrix, w: &[f64], r: &Rounder, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let (cols, vals) = k.row(i);
        *o = r.sparse_dot(cols, vals, w);
    }
}

/// `v - K w` with per-scalar rounding in `spec`.
pub fn rounded_residual(
    v: &[f64],
    k: &CsrMatrix,
    w: &[f64],
    spec: &PrecisionSpec,
) -> Result<Vec<f64>> {
    if k.ncols() != w.len() {
        return Err(Error::dims("rounded_residual", k.ncols(), w.len()));
    }
    if k.nrows() != v.len() {
        return Err(Error::dims("rounded_residual", k.nrows(), v.len()));
    }
    check_model(k.max_nnz_row(), 2, spec, "rounded_residual")?;
    let mut out = vec![0.0; k.nrows()];
    rounded_residual_into(v, k, w, &spec.rounder(), &mut out);
    check_finite(&out, max_abs(v) + max_abs(w), spec)?;
    Ok(out)
}

pub(crate) fn rounded_residual_into(
    v: &[f64],
    k: &CsrMatrix,
    w: &[f64],
    r: &Rounder,
    out: &mut [f64],
) {
    for (i, o) in out.iter_mut().enumerate() {
        let (cols, vals) = k.row(i);
        let s = r.sparse_dot(cols, vals, w);
        *o = r.sub(v[i], s);
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
