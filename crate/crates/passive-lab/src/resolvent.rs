//! Resolvent evaluation for the closed loop and the monotone output equation.
//!
//! For a node (A, B, C, D), lambda > 0, state data x1 and reference u_hat,
//! the resolvent of the feedback system solves
//!
//! ```text
//! v = C R x1 + P(lambda) phi(u_hat - v),
//! x = R x1 + R B phi(u_hat - v),        R = (lambda - A)^{-1},
//! ```
//!
//! where P(lambda) is the transfer function. The first line is an
//! m-dimensional nonlinear equation in the output v; once v is known the
//! state follows by linear algebra. [`ResolventCache`] factors (lambda - A)
//! once so repeated steps (the implicit Euler integrator takes one per step)
//! cost a pair of triangular solves plus the small nonlinear solve.
//!
//! [`solve_output_equation`] tries Newton with a finite-difference Jacobian
//! and backtracking first, then a damped iteration on the preconditioned
//! residual Q^{-1}(z - s) + phi(z) (strongly monotone whenever Herm(Q) is
//! positive definite), and finally bisection when the data is scalar and
//! real. Every return value carries the residual actually achieved.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, lambda_min_hermitian, max_abs};
use crate::node::SystemNode;
use crate::nonlinearity::MonotoneMap;
use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

const NEWTON_CAP: usize = 100;
const DAMPED_CAP: usize = 10000;
const BISECTION_CAP: usize = 500;

/// Which solver produced the output value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Newton,
    DampedFixedPoint,
    ScalarBisection,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveMethod::Newton => "newton",
            SolveMethod::DampedFixedPoint => "damped_fixed_point",
            SolveMethod::ScalarBisection => "scalar_bisection",
        };
        f.write_str(s)
    }
}

/// Outcome metadata for one nonlinear solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub iterations: usize,
    pub residual: f64,
}

/// Solution of the output equation `v = r + Q phi(u_hat - v)`.
#[derive(Clone, Debug)]
pub struct OutputSolve {
    pub output: DVector<Complex64>,
    /// phi evaluated at u_hat - output (the value fed back into the plant).
    pub feedback: DVector<Complex64>,
    pub report: SolveReport,
}

/// One resolvent application to the closed loop.
#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub state: DVector<Complex64>,
    pub output: DVector<Complex64>,
    pub feedback: DVector<Complex64>,
    pub report: SolveReport,
}

fn vec_to_real(v: &DVector<Complex64>) -> DVector<f64> {
    let m = v.len();
    DVector::from_fn(2 * m, |i, _| if i < m { v[i].re } else { v[i - m].im })
}

fn real_to_vec(z: &DVector<f64>) -> DVector<Complex64> {
    let m = z.len() / 2;
    DVector::from_fn(m, |i, _| Complex64::new(z[i], z[m + i]))
}

struct Equation<'a> {
    q: &'a DMatrix<Complex64>,
    r: &'a DVector<Complex64>,
    u_hat: &'a DVector<Complex64>,
    phi: &'a MonotoneMap,
}

impl Equation<'_> {
    fn dim(&self) -> usize {
        self.r.len()
    }

    /// phi(u_hat - v).
    fn feedback(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        self.phi.eval(&(self.u_hat - v))
    }

    /// v - r - Q phi(u_hat - v).
    fn residual_vec(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        Ok(v - self.r - self.q * self.feedback(v)?)
    }

    fn residual(&self, v: &DVector<Complex64>) -> Result<f64> {
        Ok(self.residual_vec(v)?.norm())
    }
}

fn newton(eq: &Equation<'_>, tol: f64) -> Result<Option<(DVector<Complex64>, usize)>> {
    let m = eq.dim();
    let dim = 2 * m;
    // Start at v = r (the phi = 0 guess).
    let mut z = vec_to_real(eq.r);
    let mut f = vec_to_real(&eq.residual_vec(&real_to_vec(&z))?);
    for it in 0..NEWTON_CAP {
        let fnorm = f.norm();
        if fnorm <= tol {
            return Ok(Some((real_to_vec(&z), it)));
        }
        // Forward-difference Jacobian, one map evaluation per column.
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            let step = 1e-7 * (1.0 + z[j].abs());
            let mut zj = z.clone();
            zj[j] += step;
            let fj = vec_to_real(&eq.residual_vec(&real_to_vec(&zj))?);
            jac.set_column(j, &((fj - &f) / step));
        }
        let lu = jac.lu();
        let dir = match lu.solve(&(-&f)) {
            Some(d) => d,
            None => return Ok(None),
        };
        // Backtracking on the residual norm.
        let mut alpha = 1.0f64;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &z + &dir * alpha;
            let fc = vec_to_real(&eq.residual_vec(&real_to_vec(&cand))?);
            if fc.norm() <= (1.0 - 1e-4 * alpha) * fnorm {
                z = cand;
                f = fc;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok(None);
        }
    }
    let v = real_to_vec(&z);
    if eq.residual(&v)? <= tol {
        Ok(Some((v, NEWTON_CAP)))
    } else {
        Ok(None)
    }
}

fn damped(eq: &Equation<'_>, tol: f64) -> Result<Option<(DVector<Complex64>, usize)>> {
    // Work in z = u_hat - v: the equation becomes z + Q phi(z) = s. The
    // preconditioned residual G(z) = Q^{-1}(z - s) + phi(z) is strongly
    // monotone with constant lambda_min(Herm(Q^{-1})) whenever that is
    // positive, so a small enough damping step contracts.
    let s = eq.u_hat - eq.r;
    let lu = eq.q.clone().lu();
    if !lu.is_invertible() {
        return Ok(None);
    }
    let q_inv = match lu.try_inverse() {
        Some(qi) => qi,
        None => return Ok(None),
    };
    let coercivity = lambda_min_hermitian(&hermitian_part(&q_inv));
    if coercivity <= 0.0 {
        return Ok(None);
    }
    let lip_phi = match eq.phi.lipschitz_bound() {
        Some(l) => l,
        None => probe_lipschitz(eq.phi, s.norm() + 1.0),
    };
    let lip = q_inv.norm() + lip_phi;
    let mut tau = coercivity / (lip * lip).max(1e-300);
    let mut z = s.clone();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut shrinks = 0usize;
    for it in 0..DAMPED_CAP {
        let phi_z = eq.phi.eval(&z)?;
        let unprec = &z + eq.q * &phi_z - &s;
        let res = unprec.norm();
        if res <= tol {
            return Ok(Some((eq.u_hat - &z, it)));
        }
        if res < best * (1.0 - 1e-12) {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 50 {
                tau *= 0.5;
                since_best = 0;
                shrinks += 1;
                if shrinks > 24 {
                    return Ok(None);
                }
            }
        }
        // G(z) = Q^{-1} (z + Q phi(z) - s).
        let g = &q_inv * &unprec;
        z -= g * Complex64::new(tau, 0.0);
    }
    Ok(None)
}

fn probe_lipschitz(phi: &MonotoneMap, radius: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
    let mut worst = 1.0f64;
    for _ in 0..16 {
        let a = crate::nonlinearity::sample_ball(&mut rng, phi.io_dim(), radius);
        let b = crate::nonlinearity::sample_ball(&mut rng, phi.io_dim(), radius);
        let d = (&a - &b).norm();
        if d > 1e-12 {
            if let (Ok(fa), Ok(fb)) = (phi.eval(&a), phi.eval(&b)) {
                worst = worst.max((fa - fb).norm() / d);
            }
        }
    }
    2.0 * worst + 1.0
}

type ComplexLU = LU<Complex64, Dyn, Dyn>;

/// Factored resolvent of a node at a fixed lambda > 0.
pub struct ResolventCache {
    lu: ComplexLU,
    r_b: DMatrix<Complex64>,
    transfer: DMatrix<Complex64>,
    c: DMatrix<Complex64>,
    lambda: f64,
    state_dim: usize,
    io_dim: usize,
}

impl ResolventCache {
    pub fn new(node: &SystemNode, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Invalid(format!(
                "resolvent parameter must be positive and finite, got {lambda}"
            )));
        }
        let n = node.state_dim();
        let arg = DMatrix::<Complex64>::identity(n, n) * Complex64::new(lambda, 0.0) - node.a();
        let lu = arg.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular {
                what: format!("lambda - A at lambda = {lambda}"),
            });
        }
        let r_b = lu.solve(node.b()).ok_or_else(|| Error::Singular {
            what: format!("lambda - A at lambda = {lambda}"),
        })?;
        let transfer = node.c() * &r_b + node.d();
        Ok(Self {
            lu,
            r_b,
            transfer,
            c: node.c().clone(),
            lambda,
            state_dim: n,
            io_dim: node.io_dim(),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn transfer(&self) -> &DMatrix<Complex64> {
        &self.transfer
    }

    /// (lambda - A)^{-1} x.
    pub fn apply(&self, x: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        self.lu.solve(x).ok_or_else(|| Error::Singular {
            what: "resolvent application".into(),
        })
    }

    /// Resolve the closed loop against state data x1 and reference u_hat.
    pub fn solve(
        &self,
        x1: &DVector<Complex64>,
        u_hat: &DVector<Complex64>,
        phi: &MonotoneMap,
        tol: f64,
    ) -> Result<ResolventSolution> {
        if x1.len() != self.state_dim {
            return Err(Error::Dimension {
                what: "resolvent state data",
                expected: self.state_dim,
                got: x1.len(),
            });
        }
        if u_hat.len() != self.io_dim {
            return Err(Error::Dimension {
                what: "resolvent reference",
                expected: self.io_dim,
                got: u_hat.len(),
            });
        }
        let z0 = self.apply(x1)?;
        let r = &self.c * &z0;
        let solved = solve_output_equation(&self.transfer, &r, u_hat, phi, tol)?;
        let state = &z0 + &self.r_b * &solved.feedback;
        Ok(ResolventSolution {
            state,
            output: solved.output,
            feedback: solved.feedback,
            report: solved.report,
        })
    }
}

/// Solve `v = r + Q phi(u_hat - v)` for v.
///
/// Newton runs first; if it stalls (kinks in phi, singular finite-difference
/// Jacobian) a damped iteration on the preconditioned monotone residual takes
/// over, and scalar real problems fall back to bisection as a last resort.
pub fn solve_output_equation(
    q: &DMatrix<Complex64>,
    r: &DVector<Complex64>,
    u_hat: &DVector<Complex64>,
    phi: &MonotoneMap,
    tol: f64,
) -> Result<OutputSolve> {
    let m = r.len();
    if q.nrows() != m || q.ncols() != m {
        return Err(Error::Dimension {
            what: "output equation gain matrix",
            expected: m,
            got: q.nrows(),
        });
    }
    if u_hat.len() != m {
        return Err(Error::Dimension {
            what: "output equation reference",
            expected: m,
            got: u_hat.len(),
        });
    }
    if phi.io_dim() != m {
        return Err(Error::Dimension {
            what: "output equation map",
            expected: m,
            got: phi.io_dim(),
        });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Invalid(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    let eq = Equation { q, r, u_hat, phi };

    let mut best_residual = f64::INFINITY;
    if let Some((v, its)) = newton(&eq, tol)? {
        let feedback = eq.feedback(&v)?;
        let residual = eq.residual(&v)?;
        return Ok(OutputSolve {
            output: v,
            feedback,
            report: SolveReport {
                method: SolveMethod::Newton,
                iterations: its,
                residual,
            },
        });
    }
    best_residual = best_residual.min(eq.residual(r)?);

    if let Some((v, its)) = damped(&eq, tol)? {
        let feedback = eq.feedback(&v)?;
        let residual = eq.residual(&v)?;
        return Ok(OutputSolve {
            output: v,
            feedback,
            report: SolveReport {
                method: SolveMethod::DampedFixedPoint,
                iterations: its,
                residual,
            },
        });
    }

    if let Some((v, its)) = bisection(&eq, tol)? {
        let feedback = eq.feedback(&v)?;
        let residual = eq.residual(&v)?;
        return Ok(OutputSolve {
            output: v,
            feedback,
            report: SolveReport {
                method: SolveMethod::ScalarBisection,
                iterations: its,
                residual,
            },
        });
    }

    Err(Error::NoConvergence {
        residual: best_residual,
        iterations: NEWTON_CAP + DAMPED_CAP + BISECTION_CAP,
    })
}

fn bisection(eq: &Equation<'_>, tol: f64) -> Result<Option<(DVector<Complex64>, usize)>> {
    if eq.dim() != 1 || !eq.phi.real_on_real() {
        return Ok(None);
    }
    let scale = 1.0 + max_abs(eq.q) + eq.r.norm() + eq.u_hat.norm();
    let imag = eq.q[(0, 0)].im.abs() + eq.r[0].im.abs() + eq.u_hat[0].im.abs();
    if imag > 1e-13 * scale {
        return Ok(None);
    }
    let q = eq.q[(0, 0)].re;
    let r = eq.r[0].re;
    let u_hat = eq.u_hat[0].re;
    let g = |v: f64| -> Result<f64> { Ok(v - r - q * eq.phi.eval_scalar_real(u_hat - v)?) };
    let mut a = r - 1.0;
    let mut b = r + 1.0;
    let mut ga = g(a)?;
    let mut gb = g(b)?;
    let mut span = 1.0f64;
    let mut used = 0usize;
    while ga > 0.0 || gb < 0.0 {
        span *= 2.0;
        if ga > 0.0 {
            a = r - span;
            ga = g(a)?;
        }
        if gb < 0.0 {
            b = r + span;
            gb = g(b)?;
        }
        used += 1;
        if used > 200 {
            return Ok(None);
        }
    }
    for it in 0..BISECTION_CAP {
        let mid = 0.5 * (a + b);
        let gm = g(mid)?;
        if gm.abs() <= tol {
            return Ok(Some((DVector::from_element(1, Complex64::new(mid, 0.0)), used + it)));
        }
        if gm > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
        if (b - a).abs() <= f64::EPSILON * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    let mid = 0.5 * (a + b);
    let v = DVector::from_element(1, Complex64::new(mid, 0.0));
    if eq.residual(&v)? <= tol {
        Ok(Some((v, BISECTION_CAP)))
    } else {
        Ok(None)
    }
}
