//! Randomized falsification of incremental sector claims.
//!
//! Every map in the catalog is sampled against the sector constant it
//! declares, then against a deliberately over-claimed constant. The first
//! family must pass, the second must fail with a concrete witness pair, and
//! a map that is not monotone at all must fail even plain monotonicity.

use nalgebra::DVector;
use num_complex::Complex64;
use passive_lab::nonlinearity::{Kappa, MonotoneMap};

fn declared(map: &MonotoneMap) -> f64 {
    match map.kappa() {
        Kappa::Finite(k) => k,
        // kappa = 0 reduces the falsifier to plain monotonicity.
        Kappa::Unbounded => 0.0,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog: Vec<(&str, MonotoneMap)> = vec![
        ("saturation", MonotoneMap::saturation(2)?),
        ("deadzone(0.4)", MonotoneMap::deadzone(2, 0.4)?),
        ("linear gain 0.5", MonotoneMap::linear_gain(2, 0.5)?),
        ("zero", MonotoneMap::zero(2)?),
        (
            "saturation | deadzone",
            MonotoneMap::componentwise(vec![
                MonotoneMap::saturation(1)?,
                MonotoneMap::deadzone(1, 0.3)?,
            ])?,
        ),
    ];

    println!("declared sector constants survive 400 random pairs:");
    for (name, map) in &catalog {
        let report = map.check_incremental_sector(declared(map), 400, 5.0, 42)?;
        println!("  {name:<24} {report}");
        assert!(report.passed(), "{name} must satisfy its own declaration");
    }

    println!("\nover-claimed constants are falsified:");
    for (name, map) in &catalog {
        if *name == "zero" {
            // The zero map has vanishing increments, so it sits inside the
            // sector for every constant and cannot be over-claimed.
            let report = map.check_incremental_sector(1e6, 400, 5.0, 42)?;
            println!("  {name:<24} any kappa {report}");
            assert!(report.passed());
            continue;
        }
        let too_strong = declared(map) * 10.0 + 5.0;
        let report = map.check_incremental_sector(too_strong, 400, 5.0, 42)?;
        println!("  {name:<24} kappa={too_strong:<5} {report}");
        assert!(report.failed(), "{name} cannot satisfy kappa={too_strong}");
    }

    // The negation of a monotone map is the canonical negative control:
    // it violates monotonicity itself, i.e. the sector with kappa = 0.
    let negated = MonotoneMap::custom(
        2,
        |u: &DVector<Complex64>| u.map(|z| -z),
        Kappa::Finite(1.0),
        "negated",
    )?
    .with_real_on_real()
    .with_lipschitz(1.0);
    let report = negated.check_incremental_sector(0.0, 400, 5.0, 42)?;
    println!("\nnegative control:\n  negated identity       {report}");
    assert!(report.failed());
    Ok(())
}
