//! MatrixMarket reading and writing.
//!
//! Reads `coordinate` (real, integer, pattern; general or symmetric) and
//! `array` (real, integer; general or symmetric) files. Writes coordinate
//! real general matrices and array real general vectors with 17 significant
//! digits, so values survive a round trip bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    layout: Layout,
    field: Field,
    symmetry: Symmetry,
}

fn parse_header(line: &str) -> std::result::Result<Header, String> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err("expected '%%MatrixMarket matrix <format> <field> <symmetry>'".into());
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(format!("unsupported format '{other}'")),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" if layout == Layout::Coordinate => Field::Pattern,
        other => return Err(format!("unsupported field '{other}'")),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(format!("unsupported symmetry '{other}'")),
    };
    Ok(Header {
        layout,
        field,
        symmetry,
    })
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let reader = BufReader::new(file);
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines
        .next()
        .ok_or_else(|| perr(1, "empty file".into()))?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header = parse_header(&first).map_err(|m| perr(1, m))?;

    let mut size: Option<(usize, Vec<usize>)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut array_vals: Vec<f64> = Vec::new();
    let mut entries = 0usize;
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let Some((_, dims)) = &size else {
            let want = if header.layout == Layout::Coordinate { 3 } else { 2 };
            if fields.len() != want {
                return Err(perr(lineno, format!("expected {want} size fields")));
            }
            let dims: Vec<usize> = fields
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(lineno, format!("bad size line: {e}")))?;
            if dims[0].checked_mul(dims[1]).is_none() {
                return Err(perr(lineno, "dimension overflow".into()));
            }
            if header.symmetry == Symmetry::Symmetric && dims[0] != dims[1] {
                return Err(perr(lineno, "symmetric matrix must be square".into()));
            }
            size = Some((lineno, dims));
            continue;
        };
        let parse_val = |s: &str| -> Result<f64> {
            let v = s
                .parse::<f64>()
                .map_err(|e| perr(lineno, format!("bad value '{s}': {e}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(perr(lineno, format!("non-finite value '{s}'")))
            }
        };
        match header.layout {
            Layout::Coordinate => {
                let want = if header.field == Field::Pattern { 2 } else { 3 };
                if fields.len() != want {
                    return Err(perr(lineno, format!("expected {want} fields per entry")));
                }
                let idx = |s: &str, bound: usize| -> Result<usize> {
                    let v = s
                        .parse::<usize>()
                        .map_err(|e| perr(lineno, format!("bad index '{s}': {e}")))?;
                    if v == 0 || v > bound {
                        return Err(perr(lineno, format!("index {v} outside 1..={bound}")));
                    }
                    Ok(v - 1)
                };
                let r = idx(fields[0], dims[0])?;
                let c = idx(fields[1], dims[1])?;
                let v = if header.field == Field::Pattern {
                    1.0
                } else {
                    parse_val(fields[2])?
                };
                entries += 1;
                triplets.push((r, c, v));
                if header.symmetry == Symmetry::Symmetric && r != c {
                    triplets.push((c, r, v));
                }
            }
            Layout::Array => {
                if fields.len() != 1 {
                    return Err(perr(lineno, "expected one value per line".into()));
                }
                array_vals.push(parse_val(fields[0])?);
            }
        }
    }
    let Some((size_line, dims)) = size else {
        return Err(perr(1, "missing size line".into()));
    };
    let (nrows, ncols) = (dims[0], dims[1]);
    match header.layout {
        Layout::Coordinate => {
            if entries != dims[2] {
                return Err(perr(
                    size_line,
                    format!("size line announces {} entries", dims[2]),
                ));
            }
            CsrMatrix::from_triplets(nrows, ncols, &triplets)
        }
        Layout::Array => {
            let expected = match header.symmetry {
                Symmetry::General => nrows * ncols,
                Symmetry::Symmetric => nrows * (nrows + 1) / 2,
            };
            if array_vals.len() != expected {
                return Err(perr(
                    size_line,
                    format!("expected {expected} values, found {}", array_vals.len()),
                ));
            }
            let mut trip = Vec::new();
            let mut k = 0;
            for j in 0..ncols {
                let start = if header.symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in start..nrows {
                    let v = array_vals[k];
                    k += 1;
                    if v != 0.0 {
                        trip.push((i, j, v));
                        if header.symmetry == Symmetry::Symmetric && i != j {
                            trip.push((j, i, v));
                        }
                    }
                }
            }
            CsrMatrix::from_triplets(nrows, ncols, &trip)
        }
    }
}

/// `printf("%.17g")`.
pub(crate) fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let e = format!("{x:.16e}");
    let (mant, exp) = e.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        strip_zeros(&s)
    } else {
        let m = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn write_matrix_market(k: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", k.nrows(), k.ncols(), k.nnz())?;
        for i in 0..k.nrows() {
            let (cols, vals) = k.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {}", i + 1, c + 1, format_g17(v))?;
            }
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Write a vector as an `n x 1` array file.
pub fn write_vector(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix array real general")?;
        writeln!(w, "{} 1", v.len())?;
        for &x in v {
            writeln!(w, "{}", format_g17(x))?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Read an `n x 1` (or `1 x n`) MatrixMarket file as a dense vector.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let m = read_matrix_market(path)?;
    if m.ncols() == 1 {
        Ok((0..m.nrows()).map(|i| m.get(i, 0)).collect())
    } else if m.nrows() == 1 {
        Ok((0..m.ncols()).map(|j| m.get(0, j)).collect())
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            message: format!("expected a vector, found {}x{}", m.nrows(), m.ncols()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        assert_eq!(format_g17(2.5), "2.5");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1e-20), "9.9999999999999995e-21");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(-3.0), "-3");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(0.0001), "0.0001");
        for x in [std::f64::consts::PI, 1.0 / 3.0, -7.25e-300, 6.02e23, 5e-324] {
            assert_eq!(format_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.mtx");
        let k = CsrMatrix::from_dense(&[vec![0.1, 0.0], vec![1.0 / 3.0, -2.5e-17]]);
        write_matrix_market(&k, &p).unwrap();
        assert_eq!(read_matrix_market(&p).unwrap(), k);
        let v = vec![1.0, 0.0, -1.0 / 7.0];
        let q = dir.path().join("v.mtx");
        write_vector(&v, &q).unwrap();
        assert_eq!(read_vector(&q).unwrap(), v);
    }

    #[test]
    fn symmetric_expansion() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.mtx");
        std::fs::write(
            &p,
            "%%MatrixMarket matrix coordinate real symmetric\n% c\n3 3 4\n1 1 2\n2 1 -1\n3 2 -1\n3 3 2\n",
        )
        .unwrap();
        let m = read_matrix_market(&p).unwrap();
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 2), -1.0);
        assert_eq!(m.nnz(), 6);
    }

    #[test]
    fn bad_header_reports_line_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.mtx");
        std::fs::write(&p, "%%MatrixMarket tensor coordinate real general\n1 1 1\n1 1 1\n").unwrap();
        match read_matrix_market(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_entry_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.mtx");
        std::fs::write(
            &p,
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n3 1 1\n",
        )
        .unwrap();
        match read_matrix_market(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            read_matrix_market(dir.path().join("none.mtx")),
            Err(Error::MissingFile(_))
        ));
    }
}
