//! The smallest lab instance: a one-dimensional passive node under
//! saturating output feedback.
//!
//! Three things are shown on the node x' = -x + w, y = x:
//! a hand-checkable resolvent solve, an implicit Euler run under a step
//! reference with the passivity and incremental estimates evaluated along
//! it, and the coincidence of the nonlinear loop with its linear
//! counterpart while the feedback stays inside the unit ball.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use passive_lab::node::SystemNode;
use passive_lab::nonlinearity::MonotoneMap;
use passive_lab::resolvent::ResolventCache;
use passive_lab::trajectory::integrate;
use passive_lab::verify::{incremental_check, linear_comparator_run, passivity_check};

fn scalar_node() -> SystemNode {
    let one = DMatrix::from_element(1, 1, 1.0);
    SystemNode::from_real(&(-&one), &one, &one, &DMatrix::zeros(1, 1))
        .expect("valid scalar node")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let node = scalar_node();
    let sat = MonotoneMap::saturation(1)?;
    println!(
        "node: x' = -x + w, y = x   passivity margin = {:.3e}",
        node.impedance_passivity_margin()
    );

    // Resolvent at lambda = 2 from state data 6: the implicit Euler step
    // with h = 1/2. The saturated fixed point solves 3x + sat(x) = 6,
    // landing exactly at x = y = 5/3 with the injected value sat(-y) = -1.
    let cache = ResolventCache::new(&node, 2.0)?;
    let x1 = DVector::from_element(1, Complex64::new(6.0, 0.0));
    let u_hat = DVector::zeros(1);
    let sol = cache.solve(&x1, &u_hat, &sat, 1e-12)?;
    println!(
        "resolvent at lambda=2, data 6: state={:.12} output={:.12} feedback={:.12}",
        sol.state[0].re, sol.output[0].re, sol.feedback[0].re
    );
    assert!((sol.state[0].re - 5.0 / 3.0).abs() < 1e-10);

    // A step reference drives the loop; passivity and the incremental
    // estimate are checked along the computed trajectory.
    let h = 0.05;
    let n_steps = 200;
    let x0 = DVector::from_element(1, Complex64::new(2.0, 0.0));
    let step_input = |t: f64| {
        DVector::from_element(1, Complex64::new(if t >= 2.0 { 0.8 } else { 0.0 }, 0.0))
    };
    let traj = integrate(&node, &sat, &x0, &step_input, h, n_steps).map_err(|e| e.source)?;
    println!("\nstep-reference run, {} steps of h={}", n_steps, h);
    for k in [0, 40, 80, 120, 160, 200] {
        let t = h * k as f64;
        print!("  t={t:5.2}  |x|={:.6}", traj.states[k].norm());
        if k < n_steps {
            print!("  u={:.2}  y={:+.6}", traj.inputs[k][0].re, traj.outputs[k][0].re);
        }
        println!();
    }
    let report = passivity_check(&traj)?;
    println!("  {report}");
    assert!(report.passed(), "{report}");

    let x0b = DVector::from_element(1, Complex64::new(1.2, 0.0));
    let twin = integrate(&node, &sat, &x0b, &step_input, h, n_steps).map_err(|e| e.source)?;
    let report = incremental_check(&traj, &twin, sat.kappa())?;
    println!("  {report}");
    assert!(report.passed(), "{report}");

    // Inside the unit ball saturation is the identity, so the nonlinear
    // loop must coincide with the linear one to solver accuracy.
    let small = DVector::from_element(1, Complex64::new(0.3, 0.0));
    let zero_input = |_: f64| DVector::zeros(1);
    let nonlinear = integrate(&node, &sat, &small, &zero_input, h, n_steps).map_err(|e| e.source)?;
    let linear = linear_comparator_run(&node, &small, h, n_steps)?;
    let sup = (0..=n_steps)
        .map(|k| (&nonlinear.states[k] - &linear.states[k]).norm())
        .fold(0.0f64, f64::max);
    println!("\nsmall-signal linear/nonlinear sup distance: {sup:.3e}");
    assert!(sup < 1e-8);
    Ok(())
}
