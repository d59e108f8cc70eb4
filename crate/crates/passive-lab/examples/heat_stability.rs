//! A heated plate cooling through one saturating boundary port.
//!
//! The plate starts with a hot spot, the only outlet is a Gaussian flux
//! window on the bottom edge, and the collocated feedback saturates. The
//! run is checked three ways: the energy balance along the trajectory,
//! the asymptotic decay of the state, and the time-integrated weak form
//! of the diffusion equation against a smooth test function.

use nalgebra::DVector;
use num_complex::Complex64;
use passive_lab::models::heat2d::{BoundaryProfile, HeatModel, HeatSpec};
use passive_lab::node::spectral_abscissa;
use passive_lab::nonlinearity::MonotoneMap;
use passive_lab::trajectory::{integrate, Trajectory};
use passive_lab::verify::{energy_decay_check, passivity_check, stability_check};

fn cool_down(
    model: &HeatModel,
    h: f64,
    n_steps: usize,
) -> Result<Trajectory, Box<dyn std::error::Error>> {
    let hot_spot = model.sample_cells(|x, y| {
        let (dx, dy) = (x - 0.3, y - 0.6);
        4.0 * (-18.0 * (dx * dx + dy * dy)).exp()
    });
    let x0 = model.physical_to_state(&hot_spot)?;
    let sat = MonotoneMap::saturation(1)?;
    let zero = |_: f64| DVector::<Complex64>::zeros(1);
    Ok(integrate(model.node(), &sat, &x0, &zero, h, n_steps).map_err(|e| e.source)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = HeatSpec {
        lx: 1.0,
        ly: 1.0,
        nx: 12,
        ny: 12,
        diffusivity: 1.0,
        profile: BoundaryProfile::GaussianBump { center: 0.1, width: 0.05 },
    };
    let model = spec.build()?;
    let abscissa = spectral_abscissa(&model.node().closed_loop_matrix()?)?;
    println!(
        "12x12 plate, Gaussian flux window: boundary integral {:.4}, \
         closed-loop abscissa {abscissa:.4e}",
        model.boundary_integral()
    );
    assert!(abscissa < 0.0);

    let h = 0.05;
    let n_steps = 400;
    let traj = cool_down(&model, h, n_steps)?;
    println!("  t     |x|         energy");
    for k in [0, 20, 80, 200, 400] {
        let state = &traj.states[k];
        println!(
            "  {:5.1} {:10.4e} {:11.4e}",
            h * k as f64,
            state.norm(),
            0.5 * state.norm_squared()
        );
    }
    for report in [
        passivity_check(&traj)?,
        energy_decay_check(&traj)?,
        stability_check(model.node(), &traj, 0.05)?,
    ] {
        println!("  {report}");
        assert!(report.passed(), "{report}");
    }

    // Weak-form consistency: the defect against a smooth test function is
    // first order in the step, so halving the step should nearly halve it.
    let w = |x: f64, y: f64| (1.0 + x) * (2.0 - y);
    let coarse = model.weak_residual(&cool_down(&model, 0.02, 25)?, w)?;
    let fine = model.weak_residual(&cool_down(&model, 0.01, 50)?, w)?;
    println!(
        "weak-form defect over t in [0, 0.5]: h=0.02 -> {coarse:.3e}, \
         h=0.01 -> {fine:.3e} (ratio {:.2})",
        coarse / fine
    );
    assert!(coarse < 1e-2, "coarse defect {coarse}");
    assert!(
        (1.4..=2.8).contains(&(coarse / fine)),
        "defect should shrink at first order"
    );
    Ok(())
}
