//! Observed convergence order of the implicit Euler feedback stepper.
//!
//! Each step of the integrator evaluates the nonlinear resolvent of the
//! closed loop, which is first-order accurate in time. Halving the step
//! across several levels and comparing consecutive terminal states should
//! therefore show observed orders log2(e_i / e_{i+1}) near one, on both
//! the beam and the heat plate, with forcing and saturation active.

use nalgebra::DVector;
use num_complex::Complex64;
use passive_lab::models::heat2d::{BoundaryProfile, Edge, HeatSpec};
use passive_lab::models::phs::timoshenko_preset;
use passive_lab::nonlinearity::MonotoneMap;
use passive_lab::trajectory::{step_halving_probe, ConvergenceProbe};

fn print_probe(label: &str, probe: &ConvergenceProbe) {
    println!("{label}:");
    println!("  h           |x_h(T) - x_h/2(T)|   observed order");
    for (i, err) in probe.errors.iter().enumerate() {
        let order = if i < probe.observed_orders.len() {
            format!("{:14.3}", probe.observed_orders[i])
        } else {
            String::new()
        };
        println!("  {:10.4e}  {:18.6e} {order}", probe.steps[i], err);
    }
    for order in &probe.observed_orders {
        assert!(
            (0.7..=1.3).contains(order),
            "observed order {order} strays from first order"
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let beam = timoshenko_preset(1.0, 2.0, 1.0, 1.0, 20).discretize()?;
    let hump = beam.sample_field(|zeta| {
        DVector::from_vec(vec![0.0, (std::f64::consts::PI * zeta).sin(), 0.2 * zeta, 0.0])
    })?;
    let x0 = beam.physical_to_state(&hump)?;
    let sat = MonotoneMap::saturation(beam.ports())?;
    let forcing = |t: f64| {
        DVector::from_vec(vec![
            Complex64::new(0.8 * (3.0 * t).sin(), 0.0),
            Complex64::new(0.5 * (2.0 * t).cos(), 0.0),
        ])
    };
    let probe = step_halving_probe(beam.field_node(), &sat, &x0, &forcing, 1.0, 100, 4)?;
    print_probe("beam, forced saturating loop over T = 1", &probe);

    let heat = HeatSpec {
        lx: 1.0,
        ly: 1.0,
        nx: 8,
        ny: 8,
        diffusivity: 1.0,
        profile: BoundaryProfile::UniformEdge(Edge::Bottom),
    }
    .build()?;
    let z0 = heat.sample_cells(|x, y| (2.5 * x).cos() + 0.3 * y);
    let x0 = heat.physical_to_state(&z0)?;
    let sat1 = MonotoneMap::saturation(1)?;
    let flux = |t: f64| {
        DVector::from_vec(vec![Complex64::new(1.0 + 0.8 * (4.0 * t).sin(), 0.0)])
    };
    let probe = step_halving_probe(heat.node(), &sat1, &x0, &flux, 1.0, 100, 4)?;
    print_probe("heat, oscillating boundary flux over T = 1", &probe);
    Ok(())
}
