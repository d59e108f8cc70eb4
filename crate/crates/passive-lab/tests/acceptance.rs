//! End-to-end acceptance gate for the laboratory.
//!
//! Each test exercises one promised capability at desk scale and prints a
//! single verdict line, so `cargo test --test acceptance -- --nocapture`
//! reads as a checklist. Expected values are either exact structural facts
//! (ranks, algebraic identities), hand-derived numbers, or independent
//! re-derivations computed here from scalar arithmetic; none of them flow
//! through the library code paths they are checking.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use passive_lab::models::heat2d::{BoundaryProfile, Edge, HeatModel, HeatSpec};
use passive_lab::models::phs::{timoshenko_preset, PhsModel};
use passive_lab::node::{spectral_abscissa, zero_in_spectrum, SystemNode};
use passive_lab::nonlinearity::{sample_ball, Kappa, MonotoneMap};
use passive_lab::resolvent::{solve_output_equation, ResolventCache};
use passive_lab::trajectory::{integrate, step_halving_probe, Trajectory};
use passive_lab::verify::{
    contraction_check, incremental_check, linear_comparator_run, stability_check,
};

fn criterion(number: usize, title: &str, budget: Duration, body: impl FnOnce()) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = started.elapsed();
    let verdict = if outcome.is_ok() && elapsed <= budget {
        "PASS"
    } else {
        "FAIL"
    };
    println!("acceptance {number:02} {verdict} {title} ({elapsed:.2?})");
    if let Err(panic) = outcome {
        resume_unwind(panic);
    }
    assert!(
        elapsed <= budget,
        "{title}: took {elapsed:.2?}, budget {budget:.2?}"
    );
}

fn scalar_node() -> SystemNode {
    let one = DMatrix::from_element(1, 1, 1.0);
    SystemNode::from_real(&(-&one), &one, &one, &DMatrix::zeros(1, 1)).unwrap()
}

fn beam(n: usize) -> PhsModel {
    timoshenko_preset(1.0, 1.0, 1.0, 1.0, n).discretize().unwrap()
}

fn heat(nx: usize, ny: usize, profile: BoundaryProfile) -> HeatModel {
    HeatSpec { lx: 1.0, ly: 1.0, nx, ny, diffusivity: 1.0, profile }
        .build()
        .unwrap()
}

fn unforced(
    node: &SystemNode,
    phi: &MonotoneMap,
    x0: &DVector<Complex64>,
    h: f64,
    n: usize,
) -> Trajectory {
    let zero = |_: f64| DVector::<Complex64>::zeros(node.io_dim());
    integrate(node, phi, x0, &zero, h, n)
        .map_err(|e| e.source)
        .unwrap()
}

#[test]
fn beam_boundary_structure_audit() {
    criterion(1, "beam boundary structure audit", Duration::from_secs(1), || {
        let audit = timoshenko_preset(1.0, 1.0, 1.0, 1.0, 30).audit().unwrap();
        assert!(
            audit.port_matrix_margin <= 1e-12,
            "port matrix defect {}",
            audit.port_matrix_margin
        );
        assert_eq!(audit.span_rank, 6, "combined port row rank");
        assert_eq!(audit.output_rank, 2, "output row rank");
        assert!(audit.kernel_equality, "power balance must be exact on the kernel");
        assert!(audit.passed());
    });
}

/// Raw worst margin of the cumulative incremental inequality
/// |dx_K|^2 + kappa sum h |dphi|^2 <= |dx_0|^2 + (1/kappa) sum h |du|^2,
/// recomputed here from the stored trajectories without normalization.
fn raw_incremental_margin(a: &Trajectory, b: &Trajectory, kappa: f64) -> f64 {
    let h = a.step;
    let dx0 = (&a.states[0] - &b.states[0]).norm_squared();
    let mut phi_sum = 0.0;
    let mut input_sum = 0.0;
    let mut worst = f64::INFINITY;
    for k in 0..a.n_steps() {
        phi_sum += h * (&a.feedbacks[k] - &b.feedbacks[k]).norm_squared();
        input_sum += h * (&a.inputs[k] - &b.inputs[k]).norm_squared();
        let lhs = (&a.states[k + 1] - &b.states[k + 1]).norm_squared() + kappa * phi_sum;
        let rhs = dx0 + input_sum / kappa;
        worst = worst.min(rhs - lhs);
    }
    worst
}

#[test]
fn incremental_estimate_on_shipped_scenarios() {
    criterion(
        2,
        "incremental input/output estimate with unit-sector saturation",
        Duration::from_secs(60),
        || {
            let node = scalar_node();
            let sat = MonotoneMap::saturation(1).unwrap();
            let ua = |t: f64| DVector::from_element(1, Complex64::new(0.9 * (2.0 * t).sin(), 0.0));
            let ub = |_: f64| DVector::from_element(1, Complex64::new(0.4, 0.0));
            let x0a = DVector::from_element(1, Complex64::new(1.8, 0.0));
            let x0b = DVector::from_element(1, Complex64::new(-0.6, 0.0));
            let ta = integrate(&node, &sat, &x0a, &ua, 1e-3, 10_000).map_err(|e| e.source).unwrap();
            let tb = integrate(&node, &sat, &x0b, &ub, 1e-3, 10_000).map_err(|e| e.source).unwrap();
            let margin = raw_incremental_margin(&ta, &tb, 1.0);
            assert!(margin >= -1e-6, "scalar pair margin {margin}");
            assert!(incremental_check(&ta, &tb, Kappa::Finite(1.0)).unwrap().passed());

            let beam = beam(50);
            let sat = MonotoneMap::saturation(beam.ports()).unwrap();
            let forcing = |t: f64| {
                DVector::from_vec(vec![
                    Complex64::new(0.7 * (3.0 * t).sin(), 0.0),
                    Complex64::new(0.3 * t.cos(), 0.0),
                ])
            };
            let pa = beam
                .sample_field(|z| DVector::from_vec(vec![0.0, 3.0 * (1.5 * z).sin(), 0.1 * z, 0.0]))
                .unwrap();
            let pb = beam
                .sample_field(|z| DVector::from_vec(vec![0.2 * z, -1.0, 0.0, 0.5 * z * z]))
                .unwrap();
            let xa = beam.physical_to_state(&pa).unwrap();
            let xb = beam.physical_to_state(&pb).unwrap();
            let ta = integrate(beam.field_node(), &sat, &xa, &forcing, 1e-3, 10_000)
                .map_err(|e| e.source)
                .unwrap();
            let tb = integrate(beam.field_node(), &sat, &xb, &forcing, 1e-3, 10_000)
                .map_err(|e| e.source)
                .unwrap();
            let margin = raw_incremental_margin(&ta, &tb, 1.0);
            assert!(margin >= -1e-6, "beam pair margin {margin}");
            assert!(incremental_check(&ta, &tb, Kappa::Finite(1.0)).unwrap().passed());

            let plate = heat(16, 16, BoundaryProfile::UniformEdge(Edge::Bottom));
            let sat = MonotoneMap::saturation(1).unwrap();
            let ua = |t: f64| DVector::from_element(1, Complex64::new(1.2 * (0.7 * t).cos(), 0.0));
            let ub = |t: f64| DVector::from_element(1, Complex64::new(0.5 * (1.3 * t).sin(), 0.0));
            let za = plate.sample_cells(|x, y| 2.0 * (-6.0 * ((x - 0.4).powi(2) + (y - 0.5).powi(2))).exp());
            let zb = plate.sample_cells(|x, y| 0.8 * x - 0.3 * y);
            let xa = plate.physical_to_state(&za).unwrap();
            let xb = plate.physical_to_state(&zb).unwrap();
            let ta = integrate(plate.node(), &sat, &xa, &ua, 1e-2, 2000)
                .map_err(|e| e.source)
                .unwrap();
            let tb = integrate(plate.node(), &sat, &xb, &ub, 1e-2, 2000)
                .map_err(|e| e.source)
                .unwrap();
            let margin = raw_incremental_margin(&ta, &tb, 1.0);
            assert!(margin >= -1e-6, "heat pair margin {margin}");
            assert!(incremental_check(&ta, &tb, Kappa::Finite(1.0)).unwrap().passed());
        },
    );
}

#[test]
fn contraction_of_random_unforced_pairs() {
    criterion(
        3,
        "trajectory contraction for 20 random pairs per model",
        Duration::from_secs(60),
        || {
            let scalar = scalar_node();
            let beam = beam(16);
            let plate = heat(8, 8, BoundaryProfile::UniformEdge(Edge::Bottom));
            let mut rng = ChaCha8Rng::seed_from_u64(314159);

            let mut exercise = |node: &SystemNode,
                                phi: &MonotoneMap,
                                project: &dyn Fn(DVector<Complex64>) -> DVector<Complex64>| {
                for _ in 0..20 {
                    let xa = project(sample_ball(&mut rng, node.state_dim(), 3.0));
                    let xb = project(sample_ball(&mut rng, node.state_dim(), 3.0));
                    let ta = unforced(node, phi, &xa, 0.02, 150);
                    let tb = unforced(node, phi, &xb, 0.02, 150);
                    let gap0 = (&ta.states[0] - &tb.states[0]).norm();
                    for k in 0..=ta.n_steps() {
                        let gap = (&ta.states[k] - &tb.states[k]).norm();
                        assert!(
                            gap <= gap0 + 1e-8,
                            "pair separated at step {k}: {gap} > {gap0}"
                        );
                    }
                    assert!(contraction_check(&ta, &tb).unwrap().passed());
                }
            };

            let sat1 = MonotoneMap::saturation(1).unwrap();
            exercise(&scalar, &sat1, &|x| x);
            let sat2 = MonotoneMap::saturation(beam.ports()).unwrap();
            let project = |x: DVector<Complex64>| {
                let physical = beam.state_to_physical(&x).unwrap();
                beam.physical_to_state(&physical).unwrap()
            };
            exercise(beam.field_node(), &sat2, &project);
            exercise(plate.node(), &sat1, &|x| x);
        },
    );
}

#[test]
fn resolvent_matches_an_independent_scalar_oracle() {
    criterion(
        4,
        "resolvent solves against independent scalar bisection",
        Duration::from_secs(5),
        || {
            let sat = MonotoneMap::saturation(1).unwrap();

            // Hand-derived case: lambda x - (a x + b w) = x1 with w = sat(-y)
            // collapses to 3x + sat(x) = 6, whose saturated root is 5/3.
            let node = scalar_node();
            let cache = ResolventCache::new(&node, 2.0).unwrap();
            let x1 = DVector::from_element(1, Complex64::new(6.0, 0.0));
            let sol = cache
                .solve(&x1, &DVector::zeros(1), &sat, 1e-12)
                .unwrap();
            assert!((sol.state[0].re - 5.0 / 3.0).abs() <= 1e-10);
            assert!((sol.output[0].re - 5.0 / 3.0).abs() <= 1e-10);

            // 100 randomized scalar instances against bisection on the
            // scalar fixed-point equation g(v) = v - r - q sat(u - v) = 0,
            // written out in plain f64 arithmetic.
            let sat1 = |x: f64| x.clamp(-1.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(8128);
            for instance in 0..100 {
                let a = -3.0 * rng.random::<f64>() - 0.1;
                let b = 0.2 + 1.8 * rng.random::<f64>();
                let d = rng.random::<f64>();
                let lambda = 0.5 + 3.5 * rng.random::<f64>();
                let x1_val = 10.0 * rng.random::<f64>() - 5.0;
                let u_val = 4.0 * rng.random::<f64>() - 2.0;

                let q = b * b / (lambda - a) + d;
                let r = b * x1_val / (lambda - a);
                let g = |v: f64| v - r - q * sat1(u_val - v);
                let (mut lo, mut hi) = (-50.0, 50.0);
                assert!(g(lo) < 0.0 && g(hi) > 0.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) <= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let v_oracle = 0.5 * (lo + hi);
                let w_oracle = sat1(u_val - v_oracle);
                let x_oracle = (x1_val + b * w_oracle) / (lambda - a);

                let a_m = DMatrix::from_element(1, 1, a);
                let b_m = DMatrix::from_element(1, 1, b);
                let d_m = DMatrix::from_element(1, 1, d);
                let node = SystemNode::from_real(&a_m, &b_m, &b_m, &d_m).unwrap();
                let cache = ResolventCache::new(&node, lambda).unwrap();
                let x1 = DVector::from_element(1, Complex64::new(x1_val, 0.0));
                let u = DVector::from_element(1, Complex64::new(u_val, 0.0));
                let sol = cache.solve(&x1, &u, &sat, 1e-12).unwrap();
                assert!(
                    (sol.output[0].re - v_oracle).abs() <= 1e-10,
                    "instance {instance}: output {} vs oracle {v_oracle}",
                    sol.output[0].re
                );
                assert!(
                    (sol.state[0].re - x_oracle).abs() <= 1e-10,
                    "instance {instance}: state {} vs oracle {x_oracle}",
                    sol.state[0].re
                );

                let q_m = DMatrix::from_element(1, 1, Complex64::new(q, 0.0));
                let r_v = DVector::from_element(1, Complex64::new(r, 0.0));
                let direct = solve_output_equation(&q_m, &r_v, &u, &sat, 1e-12).unwrap();
                assert!((direct.output[0].re - v_oracle).abs() <= 1e-10);
            }
        },
    );
}

#[test]
fn heat_closed_loop_spectrum_tracks_the_actuation() {
    criterion(
        5,
        "heat closed-loop abscissa with and without actuation",
        Duration::from_secs(30),
        || {
            for n in [8usize, 16] {
                let model = heat(n, n, BoundaryProfile::UniformEdge(Edge::Bottom));
                assert!(model.boundary_integral().abs() > 1e-12);
                let a_k = model.node().closed_loop_matrix().unwrap();
                let abscissa = spectral_abscissa(&a_k).unwrap();
                assert!(abscissa < 0.0, "{n}x{n} abscissa {abscissa}");
                assert!(!zero_in_spectrum(&a_k, 1e-10).unwrap());
            }
            let dead = heat(8, 8, BoundaryProfile::Zero);
            let a_k = dead.node().closed_loop_matrix().unwrap();
            let abscissa = spectral_abscissa(&a_k).unwrap();
            assert!(abscissa.abs() <= 1e-10, "unactuated abscissa {abscissa}");
            assert!(zero_in_spectrum(&a_k, 1e-10).unwrap());
        },
    );
}

#[test]
fn global_decay_from_deep_saturation() {
    criterion(
        6,
        "asymptotic decay from states deep in saturation",
        Duration::from_secs(300),
        || {
            // Heat plate: hot spot scaled far beyond the saturation ball.
            let plate = heat(8, 8, BoundaryProfile::UniformEdge(Edge::Bottom));
            let z0 = plate.sample_cells(|x, y| {
                25.0 * (-8.0 * ((x - 0.5).powi(2) + (y - 0.3).powi(2))).exp()
            });
            let x0 = plate.physical_to_state(&z0).unwrap();
            let sat = MonotoneMap::saturation(1).unwrap();
            let traj = unforced(plate.node(), &sat, &x0, 0.05, 1200);
            assert!(
                traj.outputs[0].norm() > 10.0,
                "initial output {} must sit deep in saturation",
                traj.outputs[0].norm()
            );
            let ratio = traj.final_state().norm() / traj.states[0].norm();
            assert!(ratio <= 1e-4, "heat contraction ratio {ratio} at T=60");
            let report = stability_check(plate.node(), &traj, 1e-4).unwrap();
            assert!(report.passed(), "{report}");

            // Beam: transverse velocity profile with a large tip signal.
            let beam = beam(24);
            let profile = beam
                .sample_field(|z| {
                    let ramp = (0.5 * std::f64::consts::PI * z).sin();
                    DVector::from_vec(vec![0.0, 12.0 * ramp, 0.0, 6.0 * ramp * z])
                })
                .unwrap();
            let x0 = beam.physical_to_state(&profile).unwrap();
            let sat = MonotoneMap::saturation(beam.ports()).unwrap();
            let traj = unforced(beam.field_node(), &sat, &x0, 0.05, 1200);
            assert!(traj.outputs[0].norm() > 10.0);
            let ratio = traj.final_state().norm() / traj.states[0].norm();
            assert!(ratio <= 1e-4, "beam contraction ratio {ratio} at T=60");
            let report = stability_check(beam.field_node(), &traj, 1e-4).unwrap();
            assert!(report.passed(), "{report}");
        },
    );
}

#[test]
fn small_signals_follow_the_linear_loop() {
    criterion(
        7,
        "small-signal coincidence with the linear comparator",
        Duration::from_secs(10),
        || {
            let mut worst = 0.0f64;
            let mut compare = |node: &SystemNode, x0: &DVector<Complex64>| {
                let sat = MonotoneMap::saturation(node.io_dim()).unwrap();
                let nonlinear = unforced(node, &sat, x0, 0.02, 400);
                let linear = linear_comparator_run(node, x0, 0.02, 400).unwrap();
                for k in 0..=400 {
                    // Saturation must never have engaged along the way.
                    if k < 400 {
                        assert!(nonlinear.outputs[k].norm() < 0.999);
                    }
                    worst = worst.max((&nonlinear.states[k] - &linear.states[k]).norm());
                }
            };

            let scalar = scalar_node();
            compare(&scalar, &DVector::from_element(1, Complex64::new(0.3, 0.0)));

            let plate = heat(8, 8, BoundaryProfile::UniformEdge(Edge::Bottom));
            let z0 = plate.sample_cells(|x, y| 0.2 * (x + y));
            compare(plate.node(), &plate.physical_to_state(&z0).unwrap());

            assert!(worst <= 1e-8, "sup deviation {worst}");
        },
    );
}

#[test]
fn implicit_stepping_converges_at_first_order() {
    criterion(
        8,
        "observed time-discretization order 1.0 +/- 0.3",
        Duration::from_secs(60),
        || {
            let beam = beam(20);
            let hump = beam
                .sample_field(|z| DVector::from_vec(vec![0.0, (std::f64::consts::PI * z).sin(), 0.1 * z, 0.0]))
                .unwrap();
            let x0 = beam.physical_to_state(&hump).unwrap();
            let sat = MonotoneMap::saturation(beam.ports()).unwrap();
            let forcing = |t: f64| {
                DVector::from_vec(vec![
                    Complex64::new(0.8 * (3.0 * t).sin(), 0.0),
                    Complex64::new(0.5 * (2.0 * t).cos(), 0.0),
                ])
            };
            // Coarsest 100 steps over T = 1 puts the probe exactly on the
            // grid h in {1e-2, 5e-3, 2.5e-3}.
            let probe =
                step_halving_probe(beam.field_node(), &sat, &x0, &forcing, 1.0, 100, 3).unwrap();
            assert_eq!(probe.steps, vec![1e-2, 5e-3, 2.5e-3]);
            for order in &probe.observed_orders {
                assert!((0.7..=1.3).contains(order), "beam observed order {order}");
            }

            let plate = heat(8, 8, BoundaryProfile::UniformEdge(Edge::Bottom));
            let z0 = plate.sample_cells(|x, y| (2.5 * x).cos() + 0.3 * y);
            let x0 = plate.physical_to_state(&z0).unwrap();
            let sat1 = MonotoneMap::saturation(1).unwrap();
            let flux = |t: f64| DVector::from_element(1, Complex64::new(1.0 + 0.8 * (4.0 * t).sin(), 0.0));
            let probe = step_halving_probe(plate.node(), &sat1, &x0, &flux, 1.0, 100, 3).unwrap();
            for order in &probe.observed_orders {
                assert!((0.7..=1.3).contains(order), "heat observed order {order}");
            }
        },
    );
}

fn run_cli(dir: &std::path::Path, config: &str) -> std::process::Output {
    let config_path = dir.join("scenario.json");
    std::fs::write(&config_path, config).unwrap();
    std::process::Command::new(env!("CARGO_BIN_EXE_passive-lab"))
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn negative_control_fixtures_exit_with_the_failure_code() {
    criterion(
        9,
        "negative-control fixtures exit with code 2",
        Duration::from_secs(120),
        || {
            let base = |extra: &str| {
                format!(
                    r#"{{
  "model": {{ "kind": "heat2d", "nx": 6, "ny": 6, "profile": {{ "kind": "uniform-edge", "edge": "bottom" }} }},
  "initial": {{ "kind": "uniform", "value": 1.0 }},
  "step": 0.05,
  "horizon": 3.0,
  {extra}
}}"#
                )
            };

            let dir = tempfile::tempdir().unwrap();
            let flipped = base(
                r#""nonlinearity": { "kind": "negated" },
  "checks": ["sector", "contraction"]"#,
            );
            let out = run_cli(dir.path(), &flipped);
            let text = String::from_utf8_lossy(&out.stdout).to_string();
            assert_eq!(out.status.code(), Some(2), "sign-flipped map: {text}");
            assert!(text.contains("incremental-sector FAIL"), "{text}");
            assert!(text.contains("contraction FAIL"), "{text}");

            let dir = tempfile::tempdir().unwrap();
            let corrupted = base(
                r#""nonlinearity": { "kind": "saturation" },
  "checks": ["passivity"],
  "corrupt_state_at_step": 30"#,
            );
            let out = run_cli(dir.path(), &corrupted);
            let text = String::from_utf8_lossy(&out.stdout).to_string();
            assert_eq!(out.status.code(), Some(2), "corrupted trajectory: {text}");
            assert!(text.contains("passivity FAIL"), "{text}");

            let dir = tempfile::tempdir().unwrap();
            let overdeclared = base(
                r#""nonlinearity": { "kind": "saturation", "kappa": 10.0 },
  "checks": ["sector"]"#,
            );
            let out = run_cli(dir.path(), &overdeclared);
            let text = String::from_utf8_lossy(&out.stdout).to_string();
            assert_eq!(out.status.code(), Some(2), "over-declared sector: {text}");
            assert!(text.contains("incremental-sector FAIL"), "{text}");
        },
    );
}

#[test]
fn reruns_are_byte_identical() {
    criterion(
        10,
        "identical config and seed reproduce identical bytes",
        Duration::from_secs(120),
        || {
            let config = r#"{
  "model": { "kind": "heat2d", "nx": 6, "ny": 6, "profile": { "kind": "uniform-edge", "edge": "bottom" } },
  "nonlinearity": { "kind": "saturation" },
  "initial": { "kind": "random-ball", "radius": 2.0 },
  "step": 0.05,
  "horizon": 3.0,
  "seed": 11
}"#;
            let first = tempfile::tempdir().unwrap();
            let second = tempfile::tempdir().unwrap();
            let a = run_cli(first.path(), config);
            let b = run_cli(second.path(), config);
            assert_eq!(a.status.code(), Some(0));
            assert_eq!(b.status.code(), Some(0));
            for artifact in ["trajectory.csv", "report.txt", "plot.gp"] {
                let lhs = std::fs::read(first.path().join(artifact)).unwrap();
                let rhs = std::fs::read(second.path().join(artifact)).unwrap();
                assert_eq!(lhs, rhs, "{artifact} differs between identical runs");
            }
        },
    );
}
