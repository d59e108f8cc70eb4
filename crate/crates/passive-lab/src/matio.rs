//! Plain-text matrix exchange format.
//!
//! One matrix row per line, entries separated by whitespace, each entry a
//! complex number written as `a+bi` (also accepted: `a`, `bi`, `a-bi`, `i`,
//! `-i`). Exponent notation is allowed in both parts. Export always writes
//! the full `a+bi` form with shortest round-trip float formatting, so a
//! written file parses back to the same bits.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Parse one complex entry of the form `a`, `bi`, or `a±bi`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty complex entry".into()));
    }
    let bad = |_| Error::Parse(format!("bad complex entry '{s}'"));
    if let Some(body) = s.strip_suffix(['i', 'I']) {
        // Find the sign separating real and imaginary parts: a '+'/'-' that is
        // not the leading character and not part of an exponent.
        let bytes = body.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            let c = bytes[k] as char;
            if (c == '+' || c == '-') && !matches!(bytes[k - 1] as char, 'e' | 'E') {
                split = Some(k);
                break;
            }
        }
        match split {
            Some(k) => {
                let re: f64 = body[..k].trim().parse().map_err(bad)?;
                let imag_str = body[k..].trim();
                let im: f64 = match imag_str {
                    "+" => 1.0,
                    "-" => -1.0,
                    t => t.parse().map_err(bad)?,
                };
                Ok(Complex64::new(re, im))
            }
            None => {
                let im: f64 = match body {
                    "" => 1.0,
                    "-" => -1.0,
                    "+" => 1.0,
                    t => t.parse().map_err(bad)?,
                };
                Ok(Complex64::new(0.0, im))
            }
        }
    } else {
        let re: f64 = s.parse().map_err(bad)?;
        Ok(Complex64::new(re, 0.0))
    }
}

/// Format one complex entry as `a+bi` / `a-bi`.
pub fn format_complex(z: Complex64) -> String {
    if z.im >= 0.0 || z.im.is_nan() {
        format!("{}+{}i", z.re, z.im)
    } else {
        format!("{}-{}i", z.re, -z.im)
    }
}

/// Parse a full matrix from text: one row per line, blank lines ignored.
pub fn parse_matrix(text: &str) -> Result<DMatrix<Complex64>> {
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(parse_complex)
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "ragged matrix: row with {} entries after rows with {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no matrix rows found".into()));
    }
    let nr = rows.len();
    let nc = rows[0].len();
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Parse a column vector: entries one per line, or a single line of entries.
pub fn parse_vector(text: &str) -> Result<DVector<Complex64>> {
    let m = parse_matrix(text)?;
    if m.ncols() == 1 {
        Ok(DVector::from_column_slice(m.as_slice()))
    } else if m.nrows() == 1 {
        Ok(DVector::from_iterator(m.ncols(), m.row(0).iter().copied()))
    } else {
        Err(Error::Parse(format!(
            "expected a vector, got a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Write a matrix in the row-per-line text format.
pub fn format_matrix(m: &DMatrix<Complex64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            out.push_str(&format_complex(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: &std::path::Path) -> Result<DMatrix<Complex64>> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

pub fn read_vector(path: &std::path::Path) -> Result<DVector<Complex64>> {
    parse_vector(&std::fs::read_to_string(path)?)
}

pub fn write_matrix(path: &std::path::Path, m: &DMatrix<Complex64>) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}
