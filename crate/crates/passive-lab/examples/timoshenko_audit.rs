//! Boundary structure audit of the clamped-free beam preset.
//!
//! The audit checks the algebra that makes the boundary ports passive:
//! the port matrix condition, the span rank of the input and output rows,
//! the power-exchange inequality on the constrained kernel, and the
//! characteristic-speed diagnostics of the flow/effort transform. The
//! boundary matrices do not depend on the grid, so refining it must leave
//! every audited number unchanged; the discretized nodes must then carry
//! the passivity over to matrix form at machine precision.

use passive_lab::models::phs::timoshenko_preset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = timoshenko_preset(1.0, 1.0, 1.0, 1.0, 20);
    let audit = spec.audit()?;
    println!("beam boundary audit (unit coefficients):\n{audit}\n");
    assert!(audit.passed());

    // Grid refinement cannot move boundary algebra.
    let fine = timoshenko_preset(1.0, 1.0, 1.0, 1.0, 80).audit()?;
    assert_eq!(audit.span_rank, fine.span_rank);
    assert_eq!(audit.output_rank, fine.output_rank);
    assert_eq!(audit.kernel_equality, fine.kernel_equality);
    assert!((audit.port_matrix_margin - fine.port_matrix_margin).abs() < 1e-13);
    assert!((audit.exchange_margin - fine.exchange_margin).abs() < 1e-13);
    println!("refinement 20 -> 80 grid points leaves the audit unchanged");

    // Non-unit material data changes the characteristic speeds but not the
    // structural verdict.
    let stiff = timoshenko_preset(4.0, 1.0, 1.0, 1.0, 20);
    let stiff_audit = stiff.audit()?;
    println!(
        "\nstiff beam characteristic speeds: {:?}",
        stiff_audit.characteristic_speeds
    );
    assert!(stiff_audit.passed());

    let model = spec.discretize()?;
    println!(
        "\ndiscretized passivity margins: field node {:.3e}, boundary node {:.3e}",
        model.field_node().impedance_passivity_margin(),
        model.boundary_node().boundary_passivity_margin()
    );
    assert!(model.field_node().impedance_passivity_margin() <= 1e-10);
    Ok(())
}
