//! Small complex linear-algebra helpers shared across modules.
//!
//! All inner products are the standard Hermitian product on C^n,
//! `<a,b> = b^* a`, so `re_inner(a, b)` is symmetric in its arguments.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub fn re_inner(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x * y.conj()).re)
        .sum()
}

pub fn norm_sq(a: &DVector<Complex64>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Hermitian part (M + M^*)/2.
pub fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn lambda_max_hermitian(m: &DMatrix<Complex64>) -> f64 {
    debug_assert_eq!(m.nrows(), m.ncols());
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn lambda_min_hermitian(m: &DMatrix<Complex64>) -> f64 {
    debug_assert_eq!(m.nrows(), m.ncols());
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Max absolute entry.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Whether the matrix is numerically Hermitian relative to its scale.
pub fn is_hermitian(m: &DMatrix<Complex64>, rel_tol: f64) -> bool {
    let scale = max_abs(m).max(1.0);
    let dev = max_abs(&(m - m.adjoint()));
    dev <= rel_tol * scale
}

/// Whether all imaginary parts are negligible relative to the matrix scale.
pub fn is_real(m: &DMatrix<Complex64>, rel_tol: f64) -> bool {
    let scale = max_abs(m).max(1.0);
    m.iter().all(|z| z.im.abs() <= rel_tol * scale)
}

/// Real 2n x 2n representation [[Re, -Im], [Im, Re]] of a complex matrix.
/// Its spectrum is the spectrum of the original plus the conjugates, so
/// maxima of real parts agree.
pub fn realify(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = m.nrows();
    let c = m.ncols();
    let mut out = DMatrix::<f64>::zeros(2 * n, 2 * c);
    for i in 0..n {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + n, j)] = z.im;
            out[(i + n, j + c)] = z.re;
        }
    }
    out
}

/// All eigenvalues of a general square complex matrix.
///
/// Hermitian inputs use the symmetric solver; real inputs use the real Schur
/// form; anything else goes through the 2n x 2n real representation (whose
/// spectrum contains the wanted one together with its conjugate).
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            what: "eigenvalue computation (square matrix required)",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    if is_hermitian(m, 1e-13) {
        let eig = m.clone().symmetric_eigen();
        return Ok(eig
            .eigenvalues
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect());
    }
    if is_real(m, 0.0) {
        let re = m.map(|z| z.re);
        return Ok(re.complex_eigenvalues().iter().copied().collect());
    }
    let big = realify(m);
    let ev = big.complex_eigenvalues();
    // Keep one of each conjugate pair: eigenvalues of the original matrix are
    // exactly those of the realification with the conjugates removed. Rather
    // than pair them up (fragile under rounding), return all 2n values; real
    // parts are what callers consume and those are duplicated, not wrong.
    Ok(ev.iter().copied().collect())
}

/// Orthonormal basis of the null space of `m` (columns), via SVD.
pub fn null_space(m: &DMatrix<Complex64>, rel_tol: f64) -> DMatrix<Complex64> {
    let ncols = m.ncols();
    // The thin SVD of a wide matrix does not expose the trailing rows of V^*;
    // padding with zero rows keeps singular values and V while making the
    // factorization square.
    let work = if m.nrows() < ncols {
        let mut padded = DMatrix::<Complex64>::zeros(ncols, ncols);
        padded.rows_mut(0, m.nrows()).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.expect("requested V^t");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = rel_tol * smax.max(1e-300);
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            cols.push(v_t.row(k).adjoint());
        }
    }
    let mut out = DMatrix::<Complex64>::zeros(ncols, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Numerical rank via SVD with a relative threshold.
pub fn rank(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax)
        .count()
}

/// Moore-Penrose pseudoinverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<Complex64>, rel_tol: f64) -> DMatrix<Complex64> {
    let svd = m.clone().svd(true, true);
    svd.pseudo_inverse(rel_tol).expect("svd computed")
}
