//! Certificates evaluated along computed trajectories.
//!
//! Each check turns an analytic inequality into a per-step test with an
//! explicit, scale-aware tolerance and reports the worst margin together
//! with the step where it occurred. Positive margins mean the inequality
//! held with room to spare; a check passes when the worst normalized margin
//! stays above minus the tolerance.
//!
//! The tolerances are deliberately much looser than the output-equation
//! solver tolerance (1e-8 against 1e-12), so a passing check reflects the
//! structure of the scheme rather than luck, and a corrupted trajectory
//! fails loudly.

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, re_inner};
use crate::node::{spectral_abscissa, SystemNode};
use crate::nonlinearity::Kappa;
use crate::report::VerificationReport;
use crate::resolvent::{SolveMethod, SolveReport};
use crate::trajectory::Trajectory;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Normalized tolerance shared by the trajectory checks.
pub const CHECK_TOL: f64 = 1e-8;

/// Ratio a tail output-energy window may keep relative to the previous
/// window before decay is considered stalled.
const TAIL_DECAY_RATIO: f64 = 0.9;

/// Discrete power balance along one trajectory: for every step,
/// `E_{k+1} - E_k <= h Re <phi_k, y_k>` where E is the squared-norm energy
/// and phi_k is the value fed into the plant. Margins are normalized by
/// `1 + ||x_k||^2`.
pub fn passivity_check(traj: &Trajectory) -> Result<VerificationReport> {
    require_steps(traj)?;
    let h = traj.step;
    let mut worst = f64::INFINITY;
    let mut worst_idx = 0usize;
    for k in 0..traj.n_steps() {
        let e_now = 0.5 * norm_sq(&traj.states[k]);
        let e_next = 0.5 * norm_sq(&traj.states[k + 1]);
        let supply = h * re_inner(&traj.feedbacks[k], &traj.outputs[k]);
        let margin = (supply - (e_next - e_now)) / (1.0 + norm_sq(&traj.states[k]));
        if margin < worst {
            worst = margin;
            worst_idx = k;
        }
    }
    Ok(VerificationReport::from_margin("passivity", worst, CHECK_TOL)
        .with_index(worst_idx)
        .with_details(format!(
            "steps={} max solver defect={:.3e}",
            traj.n_steps(),
            traj.max_residual()
        )))
}

/// Incremental energy estimate for a pair of trajectories of the same loop:
/// for every K,
///
/// ```text
/// ||dx_K||^2 + kappa sum_{k<K} h ||dphi_k||^2
///   <= ||dx_0||^2 + (1/kappa) sum_{k<K} h ||du_k||^2,
/// ```
///
/// where d denotes the difference between the two runs. The sector constant
/// must be finite and positive; `Kappa::Unbounded` is accepted only when the
/// two feedback sequences coincide (then both kappa terms vanish).
pub fn incremental_check(
    a: &Trajectory,
    b: &Trajectory,
    kappa: Kappa,
) -> Result<VerificationReport> {
    require_pair(a, b)?;
    let h = a.step;
    let kappa_val = match kappa {
        Kappa::Finite(k) if k > 0.0 && k.is_finite() => Some(k),
        Kappa::Finite(k) => {
            return Err(Error::Invalid(format!(
                "incremental estimate needs a positive finite sector constant, got {k}"
            )))
        }
        Kappa::Unbounded => None,
    };
    let dx0 = norm_sq(&(&a.states[0] - &b.states[0]));
    let mut phi_sum = 0.0f64;
    let mut input_sum = 0.0f64;
    let mut worst = f64::INFINITY;
    let mut worst_idx = 0usize;
    for k in 0..a.n_steps() {
        let dphi = norm_sq(&(&a.feedbacks[k] - &b.feedbacks[k]));
        let du = norm_sq(&(&a.inputs[k] - &b.inputs[k]));
        if kappa_val.is_none() {
            let scale = 1.0 + norm_sq(&a.feedbacks[k]) + norm_sq(&b.feedbacks[k]);
            if dphi > 1e-10 * scale {
                return Err(Error::Invalid(
                    "unbounded sector constant requires identical feedback sequences".into(),
                ));
            }
        }
        phi_sum += h * dphi;
        input_sum += h * du;
        let dx = norm_sq(&(&a.states[k + 1] - &b.states[k + 1]));
        let (lhs, rhs) = match kappa_val {
            Some(kv) => (dx + kv * phi_sum, dx0 + input_sum / kv),
            None => (dx, dx0),
        };
        let scale = (1.0 + (k + 1) as f64) * (1.0 + dx0 + input_sum);
        let margin = (rhs - lhs) / scale;
        if margin < worst {
            worst = margin;
            worst_idx = k;
        }
    }
    Ok(
        VerificationReport::from_margin("incremental-estimate", worst, CHECK_TOL)
            .with_index(worst_idx)
            .with_details(format!(
                "kappa={} initial gap^2={dx0:.6e}",
                match kappa {
                    Kappa::Finite(k) => format!("{k}"),
                    Kappa::Unbounded => "unbounded".into(),
                }
            )),
    )
}

/// Nonexpansiveness of the unforced loop: with zero references on both
/// trajectories, `||x_{k+1} - z_{k+1}|| <= ||x_k - z_k||` step by step.
/// Rejects forced trajectories instead of reporting on them.
pub fn contraction_check(a: &Trajectory, b: &Trajectory) -> Result<VerificationReport> {
    require_pair(a, b)?;
    if !a.input_is_zero(1e-12) || !b.input_is_zero(1e-12) {
        return Err(Error::Invalid(
            "contraction check applies to unforced trajectories only".into(),
        ));
    }
    let mut worst = f64::INFINITY;
    let mut worst_idx = 0usize;
    for k in 0..a.n_steps() {
        let now = norm_sq(&(&a.states[k] - &b.states[k]));
        let next = norm_sq(&(&a.states[k + 1] - &b.states[k + 1]));
        let margin = (now - next) / (1.0 + now);
        if margin < worst {
            worst = margin;
            worst_idx = k;
        }
    }
    Ok(VerificationReport::from_margin("contraction", worst, CHECK_TOL)
        .with_index(worst_idx)
        .with_details(format!(
            "initial gap={:.6e} final gap={:.6e}",
            (&a.states[0] - &b.states[0]).norm(),
            (a.final_state() - b.final_state()).norm()
        )))
}

/// Energy decay of the unforced loop: E_{k+1} <= E_k along the run.
pub fn energy_decay_check(traj: &Trajectory) -> Result<VerificationReport> {
    require_steps(traj)?;
    if !traj.input_is_zero(1e-12) {
        return Err(Error::Invalid(
            "energy decay check applies to unforced trajectories only".into(),
        ));
    }
    let e = traj.energies();
    let mut worst = f64::INFINITY;
    let mut worst_idx = 0usize;
    for k in 0..traj.n_steps() {
        let margin = (e[k] - e[k + 1]) / (1.0 + e[k]);
        if margin < worst {
            worst = margin;
            worst_idx = k;
        }
    }
    Ok(VerificationReport::from_margin("energy-decay", worst, CHECK_TOL)
        .with_index(worst_idx)
        .with_details(format!("E0={:.6e} EN={:.6e}", e[0], e[traj.n_steps()])))
}

/// Asymptotic decay of the unforced loop.
///
/// Prerequisite: the identity-feedback closed-loop matrix A - B(I+D)^{-1}C
/// must have a certifiably negative spectral abscissa (negative beyond the
/// eigenvalue noise floor); otherwise the check is skipped
/// (decay toward zero is not expected to be observable). When armed, two
/// conditions must hold:
///
/// - terminal contraction `||x_N|| <= epsilon ||x_0||`,
/// - tail output energy drops by the fixed window ratio across each
///   doubling of the horizon, measured over the last three dyadic windows
///   `[N/8, N/4)`, `[N/4, N/2)`, `[N/2, N)`. Earlier windows are transient,
///   not tail: successive dyadic windows double in length, so their energy
///   ratio approaches 2 at times the decay has not yet bitten, regardless
///   of the decay rate.
pub fn stability_check(
    node: &SystemNode,
    traj: &Trajectory,
    epsilon: f64,
) -> Result<VerificationReport> {
    require_steps(traj)?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Invalid(format!(
            "stability check needs epsilon > 0, got {epsilon}"
        )));
    }
    if !traj.input_is_zero(1e-12) {
        return Err(Error::Invalid(
            "stability check applies to unforced trajectories only".into(),
        ));
    }
    if traj.state_dim() != node.state_dim() {
        return Err(Error::Dimension {
            what: "stability check state",
            expected: node.state_dim(),
            got: traj.state_dim(),
        });
    }
    let a_k = node.closed_loop_matrix()?;
    let abscissa = spectral_abscissa(&a_k)?;
    // A numerically zero abscissa (a conserved mode computed with eigenvalue
    // noise) must not arm the check, so the gate scales with the matrix.
    let certified = -1e-12 * (1.0 + crate::linalg::max_abs(&a_k));
    if abscissa >= certified {
        return Ok(VerificationReport::skip(
            "stability",
            format!(
                "identity-feedback closed loop has spectral abscissa {abscissa:.6e}, decay not certified"
            ),
        ));
    }
    let x0 = traj.states[0].norm();
    let xn = traj.final_state().norm();
    let norm_margin = (epsilon * x0 - xn) / (1.0 + x0);

    // Tail output energy over dyadic windows [N/2^{j+1}, N/2^j).
    let h = traj.step;
    let n = traj.n_steps();
    let floor = 1e-14 * (1.0 + x0 * x0);
    let mut window_margin = f64::INFINITY;
    let mut hi = n;
    let mut later_energy: Option<f64> = None;
    // Stop once the window under construction would start before N/8.
    while hi >= 8 && 4 * hi >= n {
        let lo = hi / 2;
        let energy: f64 = (lo..hi).map(|k| h * norm_sq(&traj.outputs[k])).sum();
        if let Some(later) = later_energy {
            // `energy` belongs to the earlier window, `later` to the tail.
            if later > floor || energy > floor {
                let margin = (TAIL_DECAY_RATIO * energy - later) / (energy + floor);
                window_margin = window_margin.min(margin);
            }
        }
        later_energy = Some(energy);
        hi = lo;
    }
    let worst = norm_margin.min(window_margin);
    Ok(VerificationReport::from_margin("stability", worst, CHECK_TOL)
        .with_details(format!(
            "abscissa={abscissa:.6e} |x0|={x0:.6e} |xN|={xn:.6e} epsilon={epsilon} norm margin={norm_margin:.6e} window margin={window_margin:.6e}"
        )))
}

/// Reference trajectory of the identity-feedback loop computed by direct
/// linear implicit Euler on A_K = A - B(I+D)^{-1}C, in the same layout the
/// nonlinear integrator produces (zero references, phi_k = -y_k). Matches
/// `integrate` with a unit linear gain to solver accuracy, which makes it an
/// independent cross-check of the nonlinear path.
pub fn linear_comparator_run(
    node: &SystemNode,
    x0: &nalgebra::DVector<Complex64>,
    step: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if x0.len() != node.state_dim() {
        return Err(Error::Dimension {
            what: "comparator initial state",
            expected: node.state_dim(),
            got: x0.len(),
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Invalid(format!(
            "step size must be positive and finite, got {step}"
        )));
    }
    if n_steps == 0 {
        return Err(Error::Invalid("comparator needs at least one step".into()));
    }
    let n = node.state_dim();
    let m = node.io_dim();
    let a_k = node.closed_loop_matrix()?;
    let stepper = DMatrix::<Complex64>::identity(n, n) - &a_k * Complex64::new(step, 0.0);
    let lu = stepper.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular {
            what: format!("I - h A_K at h = {step}"),
        });
    }
    let out_lu = (DMatrix::<Complex64>::identity(m, m) + node.d()).lu();
    let h = Complex64::new(step, 0.0);
    let mut traj = Trajectory {
        step,
        states: vec![x0.clone()],
        outputs: Vec::with_capacity(n_steps),
        inputs: Vec::with_capacity(n_steps),
        feedbacks: Vec::with_capacity(n_steps),
        residuals: Vec::with_capacity(n_steps),
        solves: Vec::with_capacity(n_steps),
    };
    for k in 0..n_steps {
        let x_next = lu.solve(&traj.states[k]).ok_or_else(|| Error::Singular {
            what: "comparator step".into(),
        })?;
        let y = out_lu
            .solve(&(node.c() * &x_next))
            .ok_or_else(|| Error::Singular {
                what: "I + D in the comparator output".into(),
            })?;
        let phi = -&y;
        let state_defect =
            (&x_next - &traj.states[k] - (node.a() * &x_next + node.b() * &phi) * h).norm();
        let output_defect = (&y - node.c() * &x_next - node.d() * &phi).norm();
        traj.states.push(x_next);
        traj.outputs.push(y);
        traj.inputs.push(nalgebra::DVector::zeros(m));
        traj.feedbacks.push(phi);
        traj.residuals.push(state_defect + output_defect);
        traj.solves.push(SolveReport {
            method: SolveMethod::Newton,
            iterations: 0,
            residual: 0.0,
        });
    }
    Ok(traj)
}

fn require_steps(traj: &Trajectory) -> Result<()> {
    if traj.n_steps() == 0 || traj.states.len() != traj.n_steps() + 1 {
        return Err(Error::Invalid(
            "trajectory must contain at least one completed step".into(),
        ));
    }
    Ok(())
}

fn require_pair(a: &Trajectory, b: &Trajectory) -> Result<()> {
    require_steps(a)?;
    require_steps(b)?;
    if a.n_steps() != b.n_steps() {
        return Err(Error::Dimension {
            what: "trajectory pair step count",
            expected: a.n_steps(),
            got: b.n_steps(),
        });
    }
    if (a.step - b.step).abs() > 1e-15 * (1.0 + a.step.abs()) {
        return Err(Error::Invalid(format!(
            "trajectory pair uses different step sizes: {} and {}",
            a.step, b.step
        )));
    }
    if a.state_dim() != b.state_dim() {
        return Err(Error::Dimension {
            what: "trajectory pair state dimension",
            expected: a.state_dim(),
            got: b.state_dim(),
        });
    }
    if a.io_dim() != b.io_dim() {
        return Err(Error::Dimension {
            what: "trajectory pair port dimension",
            expected: a.io_dim(),
            got: b.io_dim(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::MonotoneMap;
    use crate::trajectory::integrate;
    use nalgebra::DVector;

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

    fn multiport_node() -> SystemNode {
        let a = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(2.0, 0.0), c(-2.0, 0.0), c(-0.5, 0.0)]);
        let b = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(1.0, 0.0)]);
        let ct = b.transpose();
        let d = DMatrix::<Complex64>::zeros(2, 2);
        SystemNode::new(a, b, ct, d).unwrap()
    }

    fn zero_input(m: usize) -> impl Fn(f64) -> DVector<Complex64> {
        move |_t| DVector::zeros(m)
    }

    fn sat_run(node: &SystemNode, x0: Vec<Complex64>, h: f64, n: usize) -> Trajectory {
        let sat = MonotoneMap::saturation(node.io_dim()).unwrap();
        let x0 = DVector::from_vec(x0);
        integrate(node, &sat, &x0, &zero_input(node.io_dim()), h, n).unwrap()
    }

    #[test]
    fn passivity_holds_along_saturated_runs() {
        let node = multiport_node();
        let traj = sat_run(&node, vec![c(2.0, 0.0), c(-1.5, 0.0)], 0.05, 200);
        let report = passivity_check(&traj).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn passivity_fails_on_a_corrupted_state() {
        let node = multiport_node();
        let mut traj = sat_run(&node, vec![c(2.0, 0.0), c(-1.5, 0.0)], 0.05, 200);
        // Inject spurious energy mid-run.
        traj.states[100] *= c(3.0, 0.0);
        let report = passivity_check(&traj).unwrap();
        assert!(report.failed(), "{report}");
        assert_eq!(report.worst_index, Some(99));
    }

    #[test]
    fn incremental_estimate_holds_at_the_true_constant() {
        let node = multiport_node();
        let a = sat_run(&node, vec![c(2.0, 0.0), c(-1.5, 0.0)], 0.05, 160);
        let b = sat_run(&node, vec![c(-1.0, 0.0), c(0.5, 0.0)], 0.05, 160);
        let report = incremental_check(&a, &b, Kappa::Finite(1.0)).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn incremental_estimate_rejects_an_overstated_constant() {
        let node = multiport_node();
        let a = sat_run(&node, vec![c(2.0, 0.0), c(-1.5, 0.0)], 0.05, 160);
        let b = sat_run(&node, vec![c(-1.0, 0.0), c(0.5, 0.0)], 0.05, 160);
        let report = incremental_check(&a, &b, Kappa::Finite(10.0)).unwrap();
        assert!(report.failed(), "{report}");
    }

    #[test]
    fn incremental_estimate_with_inputs() {
        // Distinct references: the input term on the right hand side must
        // absorb the divergence.
        let node = scalar_node();
        let sat = MonotoneMap::saturation(1).unwrap();
        let x0 = DVector::from_element(1, c(1.0, 0.0));
        let ua = |t: f64| DVector::from_element(1, c((t * 2.0).sin() * 0.5, 0.0));
        let ub = |_t: f64| DVector::from_element(1, c(0.25, 0.0));
        let a = integrate(&node, &sat, &x0, &ua, 0.05, 160).unwrap();
        let b = integrate(&node, &sat, &x0, &ub, 0.05, 160).unwrap();
        let report = incremental_check(&a, &b, Kappa::Finite(1.0)).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn unbounded_constant_only_for_matching_feedback() {
        let node = scalar_node();
        let zero = MonotoneMap::zero(1).unwrap();
        let xa = DVector::from_element(1, c(1.0, 0.0));
        let xb = DVector::from_element(1, c(-2.0, 0.0));
        let a = integrate(&node, &zero, &xa, &zero_input(1), 0.1, 50).unwrap();
        let b = integrate(&node, &zero, &xb, &zero_input(1), 0.1, 50).unwrap();
        let report = incremental_check(&a, &b, Kappa::Unbounded).unwrap();
        assert!(report.passed(), "{report}");
        // Saturated runs have differing feedback, so Unbounded is rejected.
        let sa = sat_run(&node, vec![c(3.0, 0.0)], 0.1, 50);
        let sb = sat_run(&node, vec![c(-2.0, 0.0)], 0.1, 50);
        assert!(incremental_check(&sa, &sb, Kappa::Unbounded).is_err());
    }

    #[test]
    fn contraction_of_the_unforced_loop() {
        let node = multiport_node();
        let a = sat_run(&node, vec![c(2.0, 0.0), c(-1.5, 0.0)], 0.05, 160);
        let b = sat_run(&node, vec![c(1.0, 0.0), c(1.0, 0.0)], 0.05, 160);
        let report = contraction_check(&a, &b).unwrap();
        assert!(report.passed(), "{report}");
        // Forced runs are rejected.
        let sat = MonotoneMap::saturation(2).unwrap();
        let x0 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let forced = integrate(
            &node,
            &sat,
            &x0,
            &|_t| DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            0.05,
            160,
        )
        .unwrap();
        assert!(contraction_check(&a, &forced).is_err());
    }

    #[test]
    fn energy_decay_along_unforced_runs() {
        let node = multiport_node();
        let traj = sat_run(&node, vec![c(2.0, 0.0), c(-1.5, 0.0)], 0.05, 160);
        let report = energy_decay_check(&traj).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn stability_certified_for_a_hurwitz_closed_loop() {
        // A_K = -2 for the scalar node; long horizon gives strong decay.
        let node = scalar_node();
        let traj = sat_run(&node, vec![c(3.0, 0.0)], 0.05, 400);
        let report = stability_check(&node, &traj, 0.1).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn stability_skipped_without_a_negative_abscissa() {
        // Lossless rotation with an output that reads nothing: A_K = A has
        // abscissa zero, so the certificate refuses to arm.
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        let b = DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let cm = DMatrix::<Complex64>::zeros(1, 2);
        let d = DMatrix::<Complex64>::zeros(1, 1);
        let node = SystemNode::new(a, b, cm, d).unwrap();
        let phi = MonotoneMap::saturation(1).unwrap();
        let x0 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let traj = integrate(&node, &phi, &x0, &zero_input(1), 0.1, 64).unwrap();
        let report = stability_check(&node, &traj, 0.1).unwrap();
        assert!(report.skipped(), "{report}");
    }

    #[test]
    fn comparator_matches_unit_gain_integration() {
        let node = multiport_node();
        let x0 = DVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]);
        let gain = MonotoneMap::linear_gain(2, 1.0).unwrap();
        let nonlinear = integrate(&node, &gain, &x0, &zero_input(2), 0.05, 100).unwrap();
        let linear = linear_comparator_run(&node, &x0, 0.05, 100).unwrap();
        for k in 0..=100 {
            let gap = (&nonlinear.states[k] - &linear.states[k]).norm();
            assert!(gap < 1e-9, "state gap at k={k}: {gap}");
        }
        for k in 0..100 {
            let gap = (&nonlinear.outputs[k] - &linear.outputs[k]).norm();
            assert!(gap < 1e-9, "output gap at k={k}: {gap}");
        }
    }

    #[test]
    fn pair_validation() {
        let node = scalar_node();
        let a = sat_run(&node, vec![c(1.0, 0.0)], 0.1, 50);
        let b = sat_run(&node, vec![c(2.0, 0.0)], 0.1, 40);
        assert!(incremental_check(&a, &b, Kappa::Finite(1.0)).is_err());
        let d = sat_run(&node, vec![c(2.0, 0.0)], 0.2, 50);
        assert!(contraction_check(&a, &d).is_err());
        assert!(incremental_check(&a, &a, Kappa::Finite(0.0)).is_err());
        assert!(incremental_check(&a, &a, Kappa::Finite(-1.0)).is_err());
    }
}
