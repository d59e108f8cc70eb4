//! Implicit Euler integration of the monotone feedback loop.
//!
//! The discrete system advanced here is
//!
//! ```text
//! x_{k+1} = x_k + h (A x_{k+1} + B phi_k),
//! y_k     = C x_{k+1} + D phi_k,
//! phi_k   = phi(u_k - y_k),
//! ```
//!
//! which is exactly one resolvent application at lambda = 1/h per step, so
//! the factorization of (lambda - A) is shared across the whole run. Every
//! step records the defect of the two defining equations; the verification
//! layer consumes those so that solver inaccuracy is never silently absorbed
//! into a certificate.

use crate::error::{Error, Result};
use crate::node::SystemNode;
use crate::nonlinearity::MonotoneMap;
use crate::resolvent::{ResolventCache, ResolventSolution, SolveReport};
use nalgebra::DVector;
use num_complex::Complex64;

/// Relative tolerance handed to the per-step output solver; scaled by the
/// current state norm.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;

/// A computed closed-loop trajectory on a uniform grid t_k = k h.
///
/// `states` has one more entry than the step-indexed vectors: step k maps
/// x_k to x_{k+1} and produces output y_k, reference u_k, feedback value
/// phi_k and defect residual_k.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub step: f64,
    pub states: Vec<DVector<Complex64>>,
    pub outputs: Vec<DVector<Complex64>>,
    pub inputs: Vec<DVector<Complex64>>,
    pub feedbacks: Vec<DVector<Complex64>>,
    pub residuals: Vec<f64>,
    pub solves: Vec<SolveReport>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.outputs.len()
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.n_steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    pub fn io_dim(&self) -> usize {
        self.outputs.first().map_or(0, |y| y.len())
    }

    pub fn final_state(&self) -> &DVector<Complex64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Squared-norm energies E_k = ||x_k||^2 / 2 along the run.
    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|x| 0.5 * x.norm_squared()).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Whether every reference sample is (numerically) zero.
    pub fn input_is_zero(&self, tol: f64) -> bool {
        self.inputs.iter().all(|u| u.norm() <= tol)
    }
}

/// Integration failure carrying whatever prefix of the run succeeded.
#[derive(Debug)]
pub struct IntegrationError {
    pub step_index: usize,
    pub source: Error,
    pub partial: Trajectory,
}

impl std::fmt::Display for IntegrationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "integration failed at step {}: {}", self.step_index, self.source)
    }
}

impl std::error::Error for IntegrationError {}

impl From<Box<IntegrationError>> for Error {
    fn from(e: Box<IntegrationError>) -> Self {
        Error::Invalid(format!(
            "integration failed at step {}: {}",
            e.step_index, e.source
        ))
    }
}

/// One implicit Euler step from x: resolves the loop at lambda = 1/h against
/// data x / h.
pub fn implicit_euler_step(
    cache: &ResolventCache,
    x: &DVector<Complex64>,
    u_hat: &DVector<Complex64>,
    phi: &MonotoneMap,
    tol: f64,
) -> Result<ResolventSolution> {
    let x1 = x * Complex64::new(cache.lambda(), 0.0);
    cache.solve(&x1, u_hat, phi, tol)
}

/// Integrate the closed loop over `n_steps` uniform steps of size `step`.
/// The reference signal is sampled at the left endpoint of each step.
pub fn integrate(
    node: &SystemNode,
    phi: &MonotoneMap,
    x0: &DVector<Complex64>,
    input: &dyn Fn(f64) -> DVector<Complex64>,
    step: f64,
    n_steps: usize,
) -> std::result::Result<Trajectory, Box<IntegrationError>> {
    let empty = |src: Error, at: usize, partial: Trajectory| {
        Box::new(IntegrationError {
            step_index: at,
            source: src,
            partial,
        })
    };
    let mut traj = Trajectory {
        step,
        states: vec![x0.clone()],
        outputs: Vec::with_capacity(n_steps),
        inputs: Vec::with_capacity(n_steps),
        feedbacks: Vec::with_capacity(n_steps),
        residuals: Vec::with_capacity(n_steps),
        solves: Vec::with_capacity(n_steps),
    };
    if !(step.is_finite() && step > 0.0) {
        let src = Error::Invalid(format!("step size must be positive and finite, got {step}"));
        return Err(empty(src, 0, traj));
    }
    if n_steps == 0 {
        let src = Error::Invalid("integration needs at least one step".into());
        return Err(empty(src, 0, traj));
    }
    if x0.len() != node.state_dim() {
        let src = Error::Dimension {
            what: "initial state",
            expected: node.state_dim(),
            got: x0.len(),
        };
        return Err(empty(src, 0, traj));
    }
    let lambda = 1.0 / step;
    let cache = match ResolventCache::new(node, lambda) {
        Ok(c) => c,
        Err(e) => return Err(empty(e, 0, traj)),
    };
    let m = node.io_dim();
    let h = Complex64::new(step, 0.0);
    for k in 0..n_steps {
        let t = step * k as f64;
        let u_hat = input(t);
        if u_hat.len() != m {
            let src = Error::Dimension {
                what: "reference signal sample",
                expected: m,
                got: u_hat.len(),
            };
            return Err(empty(src, k, traj));
        }
        let x_k = traj.states[k].clone();
        let tol = DEFAULT_SOLVER_TOL * (1.0 + x_k.norm());
        let sol = match implicit_euler_step(&cache, &x_k, &u_hat, phi, tol) {
            Ok(s) => s,
            Err(e) => return Err(empty(e, k, traj)),
        };
        // Defect of the defining equations, evaluated with the original data.
        let state_defect =
            (&sol.state - &x_k - (node.a() * &sol.state + node.b() * &sol.feedback) * h).norm();
        let output_defect =
            (&sol.output - node.c() * &sol.state - node.d() * &sol.feedback).norm();
        traj.states.push(sol.state);
        traj.outputs.push(sol.output);
        traj.inputs.push(u_hat);
        traj.feedbacks.push(sol.feedback);
        traj.residuals.push(state_defect + output_defect);
        traj.solves.push(sol.report);
    }
    Ok(traj)
}

/// Successive step-halving probe for the nonlinear semigroup approximation.
///
/// Integrates the same problem with n, 2n, 4n, ... steps over a fixed
/// horizon and reports the distances between consecutive terminal states
/// together with the observed convergence orders log2(e_i / e_{i+1});
/// implicit Euler should show orders near one.
#[derive(Clone, Debug)]
pub struct ConvergenceProbe {
    pub steps: Vec<f64>,
    pub terminal_states: Vec<DVector<Complex64>>,
    pub errors: Vec<f64>,
    pub observed_orders: Vec<f64>,
}

pub fn step_halving_probe(
    node: &SystemNode,
    phi: &MonotoneMap,
    x0: &DVector<Complex64>,
    input: &dyn Fn(f64) -> DVector<Complex64>,
    horizon: f64,
    coarsest_steps: usize,
    levels: usize,
) -> Result<ConvergenceProbe> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Invalid(format!(
            "probe horizon must be positive, got {horizon}"
        )));
    }
    if coarsest_steps == 0 {
        return Err(Error::Invalid("probe needs at least one step per level".into()));
    }
    if levels < 2 {
        return Err(Error::Invalid("probe needs at least two levels".into()));
    }
    let mut steps = Vec::with_capacity(levels);
    let mut terminal_states = Vec::with_capacity(levels);
    let mut n = coarsest_steps;
    for _ in 0..levels {
        let h = horizon / n as f64;
        let traj = integrate(node, phi, x0, input, h, n).map_err(|e| e.source)?;
        steps.push(h);
        terminal_states.push(traj.final_state().clone());
        n *= 2;
    }
    let errors: Vec<f64> = terminal_states
        .windows(2)
        .map(|w| (&w[1] - &w[0]).norm())
        .collect();
    let observed_orders: Vec<f64> = errors
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 && w[1] > 0.0 {
                (w[0] / w[1]).log2()
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(ConvergenceProbe {
        steps,
        terminal_states,
        errors,
        observed_orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_node() -> SystemNode {
        SystemNode::new(
            DMatrix::from_element(1, 1, c(-1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(0.0, 0.0)),
        )
        .unwrap()
    }

    fn zero_input(m: usize) -> impl Fn(f64) -> DVector<Complex64> {
        move |_t| DVector::zeros(m)
    }

    #[test]
    fn zero_feedback_reduces_to_linear_implicit_euler() {
        // With phi = 0 the recursion is x_{k+1} = x_k / (1 + h) exactly.
        let node = scalar_node();
        let phi = MonotoneMap::zero(1).unwrap();
        let x0 = DVector::from_element(1, c(2.0, 0.0));
        let h = 0.25;
        let n = 20;
        let traj = integrate(&node, &phi, &x0, &zero_input(1), h, n).unwrap();
        let mut expect = 2.0;
        for k in 0..=n {
            assert!((traj.states[k][0].re - expect).abs() < 1e-12, "k={k}");
            expect /= 1.0 + h;
        }
        assert!(traj.max_residual() < 1e-12);
    }

    #[test]
    fn saturation_steps_match_hand_computation() {
        // h = 1/2 so lambda = 2. From x0 = 3: the first step is the worked
        // resolvent case with solution 5/3 (saturation active); from 5/3 the
        // output equation is v = 10/9 + sat(-v)/3 with |v| <= 1 inactive
        // saturation, giving v = 5/6.
        let node = scalar_node();
        let sat = MonotoneMap::saturation(1).unwrap();
        let x0 = DVector::from_element(1, c(3.0, 0.0));
        let traj = integrate(&node, &sat, &x0, &zero_input(1), 0.5, 2).unwrap();
        assert!((traj.states[1][0].re - 5.0 / 3.0).abs() < 1e-11);
        assert!((traj.states[2][0].re - 5.0 / 6.0).abs() < 1e-11);
        assert!((traj.outputs[1][0].re - 5.0 / 6.0).abs() < 1e-11);
        assert!((traj.feedbacks[0][0].re + 1.0).abs() < 1e-11);
        assert!((traj.feedbacks[1][0].re + 5.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn passive_loop_dissipates_energy() {
        let a = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(2.0, 0.0), c(-2.0, 0.0), c(-0.5, 0.0)]);
        let b = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(1.0, 0.0)]);
        let ct = b.transpose();
        let d = DMatrix::<Complex64>::zeros(2, 2);
        let node = SystemNode::new(a, b, ct, d).unwrap();
        let sat = MonotoneMap::saturation(2).unwrap();
        let x0 = DVector::from_vec(vec![c(2.0, 0.0), c(-1.0, 0.0)]);
        let traj = integrate(&node, &sat, &x0, &zero_input(2), 0.05, 200).unwrap();
        let e = traj.energies();
        for k in 1..e.len() {
            assert!(e[k] <= e[k - 1] + 1e-10, "k={k}: {} > {}", e[k], e[k - 1]);
        }
        assert!(traj.max_residual() < 1e-9);
    }

    #[test]
    fn constant_reference_reaches_the_fixed_point() {
        // Linear gain k: steady state solves 0 = -x + k(c - x), x = k c / (1 + k).
        let node = scalar_node();
        let gain = MonotoneMap::linear_gain(1, 3.0).unwrap();
        let x0 = DVector::from_element(1, c(0.0, 0.0));
        let reference = |_t: f64| DVector::from_element(1, c(2.0, 0.0));
        let traj = integrate(&node, &gain, &x0, &reference, 0.05, 2000).unwrap();
        let expect = 3.0 * 2.0 / 4.0;
        assert!((traj.final_state()[0].re - expect).abs() < 1e-8);
        assert!(!traj.input_is_zero(1e-12));
    }

    #[test]
    fn failure_keeps_the_partial_trajectory() {
        // A = 2 with h = 1/2 makes lambda - A singular at the factorization.
        let node = SystemNode::new(
            DMatrix::from_element(1, 1, c(2.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(1.0, 0.0)),
            DMatrix::from_element(1, 1, c(0.0, 0.0)),
        )
        .unwrap();
        let phi = MonotoneMap::zero(1).unwrap();
        let x0 = DVector::from_element(1, c(1.0, 0.0));
        let err = integrate(&node, &phi, &x0, &zero_input(1), 0.5, 4).unwrap_err();
        assert_eq!(err.step_index, 0);
        assert_eq!(err.partial.states.len(), 1);
        assert!(matches!(err.source, Error::Singular { .. }));
    }

    #[test]
    fn step_halving_shows_first_order() {
        let node = scalar_node();
        let sat = MonotoneMap::saturation(1).unwrap();
        let x0 = DVector::from_element(1, c(3.0, 0.0));
        let probe = step_halving_probe(&node, &sat, &x0, &zero_input(1), 1.0, 8, 5).unwrap();
        assert_eq!(probe.errors.len(), 4);
        assert_eq!(probe.observed_orders.len(), 3);
        for (i, ord) in probe.observed_orders.iter().enumerate() {
            assert!(
                (0.6..=1.4).contains(ord),
                "order {i} out of range: {ord} (errors {:?})",
                probe.errors
            );
        }
    }

    #[test]
    fn validation_errors_surface_immediately() {
        let node = scalar_node();
        let phi = MonotoneMap::zero(1).unwrap();
        let x0 = DVector::from_element(1, c(1.0, 0.0));
        assert!(integrate(&node, &phi, &x0, &zero_input(1), 0.0, 4).is_err());
        assert!(integrate(&node, &phi, &x0, &zero_input(1), 0.1, 0).is_err());
        let bad_x0 = DVector::<Complex64>::zeros(2);
        assert!(integrate(&node, &phi, &bad_x0, &zero_input(1), 0.1, 4).is_err());
        let bad_input = |_t: f64| DVector::<Complex64>::zeros(3);
        let err = integrate(&node, &phi, &x0, &bad_input, 0.1, 4).unwrap_err();
        assert!(matches!(err.source, Error::Dimension { .. }));
    }
}
