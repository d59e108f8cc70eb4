//! Trajectory contraction for randomized pairs of initial states.
//!
//! For an impedance-passive node in negative feedback with a monotone map,
//! any two unforced solutions can only drift closer: ||xa(t) - xb(t)|| is
//! nonincreasing. This drives randomized pairs through the beam and the
//! heat plate and verifies the contraction margin of every pair, plus the
//! incremental input/output estimate on a forced pair.

use nalgebra::DVector;
use num_complex::Complex64;
use passive_lab::models::heat2d::{BoundaryProfile, Edge, HeatSpec};
use passive_lab::models::phs::timoshenko_preset;
use passive_lab::node::SystemNode;
use passive_lab::nonlinearity::{sample_ball, Kappa, MonotoneMap};
use passive_lab::trajectory::{integrate, Trajectory};
use passive_lab::verify::{contraction_check, incremental_check};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unforced(
    node: &SystemNode,
    phi: &MonotoneMap,
    x0: &DVector<Complex64>,
    h: f64,
    n: usize,
) -> Result<Trajectory, Box<dyn std::error::Error>> {
    let zero = |_: f64| DVector::<Complex64>::zeros(node.io_dim());
    Ok(integrate(node, phi, x0, &zero, h, n).map_err(|e| e.source)?)
}

fn worst_pair_margin(
    node: &SystemNode,
    phi: &MonotoneMap,
    project: &dyn Fn(DVector<Complex64>) -> DVector<Complex64>,
    rng: &mut ChaCha8Rng,
    pairs: usize,
) -> Result<f64, Box<dyn std::error::Error>> {
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let xa = project(sample_ball(rng, node.state_dim(), 2.0));
        let xb = project(sample_ball(rng, node.state_dim(), 2.0));
        let ta = unforced(node, phi, &xa, 0.02, 150)?;
        let tb = unforced(node, phi, &xb, 0.02, 150)?;
        let report = contraction_check(&ta, &tb)?;
        assert!(report.passed(), "{report}");
        worst = worst.min(report.margin);
    }
    Ok(worst)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);

    let spec = timoshenko_preset(1.0, 1.0, 1.0, 1.0, 16);
    let beam = spec.discretize()?;
    let beam_sat = MonotoneMap::saturation(beam.ports())?;
    // Samples are projected onto the constrained energy subspace the
    // discretization lives on, as a raw ball sample need not satisfy the
    // clamped-end conditions.
    let beam_project = |x: DVector<Complex64>| {
        let physical = beam.state_to_physical(&x).expect("dimension fixed above");
        beam.physical_to_state(&physical).expect("dimension fixed above")
    };
    let worst = worst_pair_margin(
        beam.field_node(),
        &beam_sat,
        &beam_project,
        &mut rng,
        20,
    )?;
    println!("beam, 20 random pairs under saturation: worst contraction margin {worst:.3e}");

    let heat = HeatSpec {
        lx: 1.0,
        ly: 1.0,
        nx: 8,
        ny: 8,
        diffusivity: 1.0,
        profile: BoundaryProfile::UniformEdge(Edge::Bottom),
    }
    .build()?;
    let deadzone = MonotoneMap::deadzone(1, 0.3)?;
    let worst = worst_pair_margin(heat.node(), &deadzone, &|x| x, &mut rng, 20)?;
    println!("heat, 20 random pairs under deadzone:   worst contraction margin {worst:.3e}");

    // Forced pair: same plant, different inputs and different starts. The
    // incremental estimate bounds the growth by the input mismatch energy.
    let sat = MonotoneMap::saturation(1)?;
    let xa = sample_ball(&mut rng, heat.cells(), 1.0);
    let xb = sample_ball(&mut rng, heat.cells(), 1.0);
    let ua = |t: f64| DVector::from_vec(vec![Complex64::new(0.6 * (2.0 * t).sin(), 0.0)]);
    let ub = |t: f64| DVector::from_vec(vec![Complex64::new(0.4 * (2.0 * t).cos(), 0.0)]);
    let ta = integrate(heat.node(), &sat, &xa, &ua, 0.02, 300).map_err(|e| e.source)?;
    let tb = integrate(heat.node(), &sat, &xb, &ub, 0.02, 300).map_err(|e| e.source)?;
    let report = incremental_check(&ta, &tb, Kappa::Finite(1.0))?;
    println!("forced heat pair: {report}");
    assert!(report.passed(), "{report}");
    Ok(())
}
