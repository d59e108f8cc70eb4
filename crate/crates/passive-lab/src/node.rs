//! Finite-dimensional state-space nodes and their passivity certificates.
//!
//! A node is a quadruple (A, B, C, D) on C^n with m-dimensional ports,
//!
//! ```text
//! x' = A x + B w,    y = C x + D w.
//! ```
//!
//! It is impedance passive exactly when the Hermitian block matrix
//!
//! ```text
//! H = [ A + A*    B - C* ]
//!     [ B* - C   -(D + D*) ]
//! ```
//!
//! is negative semidefinite; [`SystemNode::impedance_passivity_margin`]
//! returns the largest eigenvalue of H, so passivity means margin <= 0 up to
//! the caller's tolerance. Along solutions this is the power balance
//! `d/dt (||x||^2 / 2) <= Re <w, y>`.
//!
//! [`BoundaryNode`] carries systems whose input acts through a boundary-type
//! constraint `G x = w` rather than an input matrix, together with the
//! standard conversion to an ordinary node.

use crate::error::{Error, Result, MAX_STATE_DIM};
use crate::linalg::{self, hermitian_part, lambda_max_hermitian, lambda_min_hermitian};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// State-space node (A, B, C, D) with state dimension n and port dimension m.
#[derive(Clone, Debug)]
pub struct SystemNode {
    a: DMatrix<Complex64>,
    b: DMatrix<Complex64>,
    c: DMatrix<Complex64>,
    d: DMatrix<Complex64>,
}

impl SystemNode {
    pub fn new(
        a: DMatrix<Complex64>,
        b: DMatrix<Complex64>,
        c: DMatrix<Complex64>,
        d: DMatrix<Complex64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                what: "state matrix (square required)",
                expected: n,
                got: a.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Invalid("state dimension must be at least 1".into()));
        }
        if n > MAX_STATE_DIM {
            return Err(Error::TooLarge(n));
        }
        let m = d.nrows();
        if d.ncols() != m {
            return Err(Error::Dimension {
                what: "feedthrough matrix (square required)",
                expected: m,
                got: d.ncols(),
            });
        }
        if m == 0 {
            return Err(Error::Invalid("port dimension must be at least 1".into()));
        }
        if b.nrows() != n || b.ncols() != m {
            return Err(Error::Dimension {
                what: "input matrix rows",
                expected: n,
                got: b.nrows(),
            });
        }
        if c.nrows() != m || c.ncols() != n {
            return Err(Error::Dimension {
                what: "output matrix columns",
                expected: n,
                got: c.ncols(),
            });
        }
        Ok(Self { a, b, c, d })
    }

    /// Construct from real matrices.
    pub fn from_real(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> Result<Self> {
        let lift = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        Self::new(lift(a), lift(b), lift(c), lift(d))
    }

    pub fn a(&self) -> &DMatrix<Complex64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<Complex64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<Complex64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<Complex64> {
        &self.d
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn io_dim(&self) -> usize {
        self.d.nrows()
    }

    /// Largest eigenvalue of the passivity block matrix H; the node is
    /// impedance passive exactly when this is <= 0.
    pub fn impedance_passivity_margin(&self) -> f64 {
        let n = self.state_dim();
        let m = self.io_dim();
        let mut h = DMatrix::<Complex64>::zeros(n + m, n + m);
        h.view_mut((0, 0), (n, n)).copy_from(&(&self.a + self.a.adjoint()));
        let upper = &self.b - self.c.adjoint();
        h.view_mut((0, n), (n, m)).copy_from(&upper);
        h.view_mut((n, 0), (m, n)).copy_from(&upper.adjoint());
        h.view_mut((n, n), (m, m)).copy_from(&-(&self.d + self.d.adjoint()));
        lambda_max_hermitian(&h)
    }

    pub fn is_impedance_passive(&self, tol: f64) -> bool {
        self.impedance_passivity_margin() <= tol
    }

    /// Transfer function P(lambda) = C (lambda - A)^{-1} B + D.
    pub fn transfer_function(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.state_dim();
        let resolvent_arg = DMatrix::<Complex64>::identity(n, n) * lambda - &self.a;
        let lu = resolvent_arg.lu();
        let solved = lu.solve(&self.b).ok_or_else(|| Error::Singular {
            what: format!("lambda - A at lambda = {lambda}"),
        })?;
        Ok(&self.c * solved + &self.d)
    }

    /// Smallest eigenvalue of the Hermitian part of P(lambda). Positive
    /// values make the output equation of the resolvent strongly monotone.
    pub fn coercivity_margin(&self, lambda: Complex64) -> Result<f64> {
        let p = self.transfer_function(lambda)?;
        Ok(lambda_min_hermitian(&hermitian_part(&p)))
    }

    /// State matrix of the loop closed with the identity map and zero
    /// reference: w = -y gives A_K = A - B (I + D)^{-1} C.
    pub fn closed_loop_matrix(&self) -> Result<DMatrix<Complex64>> {
        let m = self.io_dim();
        let id = DMatrix::<Complex64>::identity(m, m);
        let lu = (&id + &self.d).lu();
        let solved = lu.solve(&self.c).ok_or_else(|| Error::Singular {
            what: "I + D in the closed-loop matrix".into(),
        })?;
        Ok(&self.a - &self.b * solved)
    }
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(m: &DMatrix<Complex64>) -> Result<f64> {
    let ev = linalg::eigenvalues(m)?;
    Ok(ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Whether the spectrum contains a point within `tol` of zero.
pub fn zero_in_spectrum(m: &DMatrix<Complex64>, tol: f64) -> Result<bool> {
    let ev = linalg::eigenvalues(m)?;
    Ok(ev.iter().any(|z| z.norm() <= tol))
}

/// Node in boundary form: dynamics `x' = L x` subject to the port constraint
/// `G x = w`, with output `y = K x`. `gr` is a right inverse of G used to
/// split the state into constrained and free parts.
#[derive(Clone, Debug)]
pub struct BoundaryNode {
    l: DMatrix<Complex64>,
    g: DMatrix<Complex64>,
    k: DMatrix<Complex64>,
    gr: DMatrix<Complex64>,
}

impl BoundaryNode {
    pub fn new(
        l: DMatrix<Complex64>,
        g: DMatrix<Complex64>,
        k: DMatrix<Complex64>,
        gr: DMatrix<Complex64>,
    ) -> Result<Self> {
        let n = l.nrows();
        if l.ncols() != n {
            return Err(Error::Dimension {
                what: "boundary dynamics matrix (square required)",
                expected: n,
                got: l.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Invalid("state dimension must be at least 1".into()));
        }
        if n > MAX_STATE_DIM {
            return Err(Error::TooLarge(n));
        }
        let p = g.nrows();
        if p == 0 || p > n {
            return Err(Error::Invalid(format!(
                "port dimension must lie in 1..={n}, got {p}"
            )));
        }
        if g.ncols() != n {
            return Err(Error::Dimension {
                what: "input constraint matrix columns",
                expected: n,
                got: g.ncols(),
            });
        }
        if k.nrows() != p || k.ncols() != n {
            return Err(Error::Dimension {
                what: "boundary output matrix rows",
                expected: p,
                got: k.nrows(),
            });
        }
        if gr.nrows() != n || gr.ncols() != p {
            return Err(Error::Dimension {
                what: "right inverse rows",
                expected: n,
                got: gr.nrows(),
            });
        }
        if linalg::rank(&g, 1e-10) != p {
            return Err(Error::Invalid(
                "input constraint matrix must have full row rank".into(),
            ));
        }
        let residual = &g * &gr - DMatrix::<Complex64>::identity(p, p);
        if linalg::max_abs(&residual) > 1e-10 {
            return Err(Error::Invalid(format!(
                "gr is not a right inverse of G, |G gr - I| = {:.3e}",
                linalg::max_abs(&residual)
            )));
        }
        Ok(Self { l, g, k, gr })
    }

    pub fn l(&self) -> &DMatrix<Complex64> {
        &self.l
    }
    pub fn g(&self) -> &DMatrix<Complex64> {
        &self.g
    }
    pub fn k(&self) -> &DMatrix<Complex64> {
        &self.k
    }
    pub fn gr(&self) -> &DMatrix<Complex64> {
        &self.gr
    }

    pub fn state_dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn io_dim(&self) -> usize {
        self.g.nrows()
    }

    /// Largest eigenvalue of Herm(L) - Herm(K* G). Nonpositive means the
    /// boundary power balance Re <L x, x> <= Re <G x, K x> holds for all x.
    pub fn boundary_passivity_margin(&self) -> f64 {
        let m = hermitian_part(&self.l) - hermitian_part(&(self.k.adjoint() * &self.g));
        lambda_max_hermitian(&m)
    }

    /// Standard conversion to an ordinary node: with P = I - gr G,
    /// A = L P, B = L gr, C = K P, D = K gr. States of the converted node
    /// describe the part of x not pinned by the port constraint; by
    /// construction A gr = 0, so the constrained directions are invariant.
    pub fn to_system_node(&self) -> Result<SystemNode> {
        let n = self.state_dim();
        let proj = DMatrix::<Complex64>::identity(n, n) - &self.gr * &self.g;
        let a = &self.l * &proj;
        let b = &self.l * &self.gr;
        let c = &self.k * &proj;
        let d = &self.k * &self.gr;
        SystemNode::new(a, b, c, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_node() -> SystemNode {
        // x' = -x + w, y = x. H = diag(-2, 0), margin exactly 0.
        SystemNode::new(
            DMatrix::from_element(1, 1, c(-1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(0.0, 0.0)),
        )
        .unwrap()
    }

    #[test]
    fn scalar_margin_is_exactly_zero() {
        assert_eq!(scalar_node().impedance_passivity_margin(), 0.0);
        assert!(scalar_node().is_impedance_passive(1e-10));
    }

    #[test]
    fn margins_move_with_the_data() {
        // Adding feedthrough dissipation pushes the margin negative.
        let damped = SystemNode::new(
            DMatrix::from_element(1, 1, c(-1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
        )
        .unwrap();
        assert!((damped.impedance_passivity_margin() + 2.0).abs() < 1e-14);
        // An unstable drift breaks passivity.
        let active = SystemNode::new(
            DMatrix::from_element(1, 1, c(0.5, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(0.0, 0.0)),
        )
        .unwrap();
        assert!((active.impedance_passivity_margin() - 1.0).abs() < 1e-14);
        assert!(!active.is_impedance_passive(1e-10));
        // A mismatch between B and C* shows up in the off-diagonal block:
        // H = [[-2, 1], [1, 0]] has lambda_max = sqrt(2) - 1.
        let skewed = SystemNode::new(
            DMatrix::from_element(1, 1, c(-1.0, 0.0)),
            DMatrix::from_element(1, 1, c(2.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(0.0, 0.0)),
        )
        .unwrap();
        assert!((skewed.impedance_passivity_margin() - (2.0f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn transfer_function_scalar() {
        let node = scalar_node();
        let p = node.transfer_function(c(2.0, 0.0)).unwrap();
        assert!((p[(0, 0)] - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
        // Coercivity at lambda = 2 equals Re P = 1/3.
        assert!((node.coercivity_margin(c(2.0, 0.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // lambda = -1 hits the pole.
        assert!(matches!(
            node.transfer_function(c(-1.0, 0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn closed_loop_matrix_values() {
        let node = scalar_node();
        let ak = node.closed_loop_matrix().unwrap();
        assert!((ak[(0, 0)] - c(-2.0, 0.0)).norm() < 1e-15);
        let damped = SystemNode::new(
            DMatrix::from_element(1, 1, c(-1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
        )
        .unwrap();
        let ak2 = damped.closed_loop_matrix().unwrap();
        assert!((ak2[(0, 0)] - c(-1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn spectral_abscissa_paths() {
        // Hermitian path.
        let herm = DMatrix::from_diagonal(&DVector::from_vec(vec![c(-1.0, 0.0), c(-3.0, 0.0)]));
        assert!((spectral_abscissa(&herm).unwrap() + 1.0).abs() < 1e-13);
        // Real nonsymmetric path: rotation has spectrum on the imaginary axis.
        let rot = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        assert!(spectral_abscissa(&rot).unwrap().abs() < 1e-12);
        assert!(zero_in_spectrum(&rot, 1e-10).is_ok());
        // Genuinely complex path through the realified form.
        let cmpl = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 2.0), c(0.0, 3.0), c(0.0, 0.0), c(-3.0, 1.0)],
        );
        assert!((spectral_abscissa(&cmpl).unwrap() - 1.0).abs() < 1e-10);
        // Singular matrix reports zero in the spectrum.
        let sing = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(zero_in_spectrum(&sing, 1e-10).unwrap());
        assert!(!zero_in_spectrum(&herm, 1e-10).unwrap());
    }

    #[test]
    fn dimension_validation() {
        let a = DMatrix::<Complex64>::zeros(2, 2);
        let b = DMatrix::<Complex64>::zeros(3, 1);
        let cm = DMatrix::<Complex64>::zeros(1, 2);
        let d = DMatrix::<Complex64>::zeros(1, 1);
        assert!(matches!(
            SystemNode::new(a, b, cm, d),
            Err(Error::Dimension { .. })
        ));
        let big = DMatrix::<Complex64>::zeros(MAX_STATE_DIM + 1, MAX_STATE_DIM + 1);
        let bb = DMatrix::<Complex64>::zeros(MAX_STATE_DIM + 1, 1);
        let cb = DMatrix::<Complex64>::zeros(1, MAX_STATE_DIM + 1);
        let db = DMatrix::<Complex64>::zeros(1, 1);
        assert!(matches!(
            SystemNode::new(big, bb, cb, db),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn boundary_node_validation() {
        let l = DMatrix::<Complex64>::zeros(2, 2);
        let g = DMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let k = g.clone();
        // Wrong right inverse is rejected.
        let bad_gr = DMatrix::from_column_slice(2, 1, &[c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(BoundaryNode::new(l.clone(), g.clone(), k.clone(), bad_gr).is_err());
        // Rank-deficient constraint is rejected.
        let g0 = DMatrix::<Complex64>::zeros(1, 2);
        let gr = DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(BoundaryNode::new(l.clone(), g0, k.clone(), gr.clone()).is_err());
        assert!(BoundaryNode::new(l, g, k, gr).is_ok());
    }

    #[test]
    fn boundary_conversion_structure() {
        // Port-memory layout: free part x' = -x + q, port q constrained,
        // output reads the free part. L = [[-1, 1], [0, 0]], G = [0, 1],
        // K = [1, 0], gr = e2.
        let l = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let g = DMatrix::from_row_slice(1, 2, &[c(0.0, 0.0), c(1.0, 0.0)]);
        let k = DMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let gr = DMatrix::from_column_slice(2, 1, &[c(0.0, 0.0), c(1.0, 0.0)]);
        let bn = BoundaryNode::new(l, g, k, gr).unwrap();
        assert!(bn.boundary_passivity_margin() <= 1e-12);
        let node = bn.to_system_node().unwrap();
        // A annihilates the constrained direction.
        let a_gr = node.a() * bn.gr();
        assert!(linalg::max_abs(&a_gr) < 1e-14);
        // The conversion reproduces the scalar example on the free part.
        assert!((node.a()[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((node.b()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((node.c()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((node.d()[(0, 0)]).norm() < 1e-15);
        assert!(node.impedance_passivity_margin() <= 1e-12);
    }
}
