//! Closed-loop spectra of the boundary-actuated heat cell model.
//!
//! With a boundary flux profile of nonzero mean the identity feedback
//! damps every mode: the closed-loop spectral abscissa is strictly
//! negative, and it stays bounded away from zero under grid refinement.
//! With the actuation switched off the mean temperature is conserved,
//! which shows up as an exact zero eigenvalue and an abscissa of zero.

use passive_lab::linalg::eigenvalues;
use passive_lab::models::heat2d::{BoundaryProfile, Edge, HeatSpec};
use passive_lab::node::spectral_abscissa;

fn abscissa_of(spec: &HeatSpec) -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let model = spec.build()?;
    let a_k = model.node().closed_loop_matrix()?;
    Ok((spectral_abscissa(&a_k)?, model.boundary_integral()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = HeatSpec {
        lx: 1.0,
        ly: 1.0,
        nx: 8,
        ny: 8,
        diffusivity: 1.0,
        profile: BoundaryProfile::UniformEdge(Edge::Bottom),
    };

    println!("actuated (unit flux on the bottom edge):");
    for (nx, ny) in [(8, 8), (16, 16)] {
        let spec = HeatSpec { nx, ny, ..base.clone() };
        let (abscissa, integral) = abscissa_of(&spec)?;
        println!(
            "  {nx:2}x{ny:<2} grid: closed-loop abscissa {abscissa:.6e}, \
             boundary integral {integral:.3}"
        );
        assert!(integral.abs() > 1e-12, "actuated profile must have nonzero mean");
        assert!(abscissa < -1e-3, "actuated loop must be uniformly damped");
    }

    println!("unactuated (zero flux profile):");
    let dead = HeatSpec { profile: BoundaryProfile::Zero, ..base };
    let model = dead.build()?;
    let a_k = model.node().closed_loop_matrix()?;
    let abscissa = spectral_abscissa(&a_k)?;
    let eigs = eigenvalues(&a_k)?;
    let nearest_zero = eigs
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    println!(
        "  8x8 grid: abscissa {abscissa:.3e}, eigenvalue nearest the origin \
         has modulus {nearest_zero:.3e}"
    );
    assert!(abscissa.abs() < 1e-10, "conserved mean must pin the abscissa at zero");
    assert!(nearest_zero < 1e-10, "zero must lie in the unactuated spectrum");

    // The conserved quantity is the spatial mean: A_K annihilates constants.
    let ones = nalgebra::DVector::from_element(model.cells(), num_complex::Complex64::new(1.0, 0.0));
    let residual = (&a_k * &ones).norm();
    println!("  |A_K 1| = {residual:.3e} (constants are invariant)");
    assert!(residual < 1e-10);
    Ok(())
}
