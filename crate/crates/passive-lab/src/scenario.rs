//! Declarative scenario configs and the drivers behind the command line.
//!
//! A scenario is a JSON document that selects a model, a monotone feedback
//! map, an initial condition, an input signal, and the checks to run along
//! the computed trajectory:
//!
//! ```json
//! {
//!   "model": { "kind": "heat2d", "nx": 8, "ny": 8,
//!              "profile": { "kind": "uniform-edge", "edge": "bottom" } },
//!   "nonlinearity": { "kind": "saturation" },
//!   "initial": { "kind": "uniform", "value": 1.0 },
//!   "input": { "kind": "zero" },
//!   "horizon": 2.0,
//!   "step": 0.05,
//!   "checks": ["passivity", "sector", "energy-decay", "stability"],
//!   "seed": 7
//! }
//! ```
//!
//! Model kinds: `heat2d`, `timoshenko`, `transport`, and `custom-node`
//! (four plain-text matrix files, paths resolved relative to the config).
//! The beam coefficients accept either a plain number or a profile object
//! (`constant`, `linear`, `exponential`) so spatially varying material laws
//! are reachable from config. Nonlinearity kinds: `zero`, `saturation`,
//! `linear-gain`, `deadzone`, `negated`, and `componentwise` with nested
//! parts. `saturation` and `deadzone` accept an optional `kappa` field that
//! *declares* the sector constant used by the checks instead of the map's
//! true one; an over-claimed constant is the intended way to build failing
//! fixtures. `negated` is the built-in negative control: a map that is not
//! monotone but claims to be.
//!
//! Initial conditions (`zero`, `uniform`, `random-ball`, `file`) and file
//! inputs are stated in physical coordinates for the built-in models (cell
//! temperatures, field values on the grid) and in raw state coordinates for
//! `custom-node`. Random and file data are projected onto the constraint
//! manifold where the model has one.
//!
//! Checks: `passivity`, `sector`, `incremental`, `contraction`,
//! `energy-decay`, `stability`. An empty `checks` list means passivity and
//! sector, plus energy decay and stability when the input is zero. Checks
//! whose hypothesis needs an unforced loop are reported as skipped on
//! forced runs rather than asserted.
//!
//! Exit codes: 0 all checks pass, 1 input or config error, 2 at least one
//! check failed, 3 nothing failed but at least one check was skipped.
//! Runs are deterministic: the same config and seed produce byte-identical
//! CSV and report files.

use crate::error::{Error, Result};
use crate::linalg::{is_real, norm_sq, realify};
use crate::matio;
use crate::models::heat2d::{BoundaryProfile, Edge, HeatModel, HeatSpec};
use crate::models::phs::{
    timoshenko_preset, transport_preset, CoefficientField, PhsModel, PhsSpec,
};
use crate::node::{spectral_abscissa, zero_in_spectrum, SystemNode};
use crate::nonlinearity::{sample_ball, Kappa, MonotoneMap};
use crate::report::{CheckStatus, VerificationReport};
use crate::trajectory::{integrate, Trajectory};
use crate::verify::{
    contraction_check, energy_decay_check, incremental_check, passivity_check, stability_check,
    CHECK_TOL,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Sample count for the randomized sector falsifier.
const SECTOR_SAMPLES: usize = 200;
/// Sampling radius for the sector falsifier.
const SECTOR_RADIUS: f64 = 4.0;
/// Seed used when neither the config nor the caller provides one.
const DEFAULT_SEED: u64 = 0x70617373;
/// Salt separating the twin-trajectory perturbation stream from the
/// sector sampler.
const TWIN_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

// ---------------------------------------------------------------------------
// Config schema

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub nonlinearity: MapConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub input: InputConfig,
    pub horizon: f64,
    pub step: f64,
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    /// Tamper fixture: after integration, scale the recorded state at this
    /// step by 3 so conservation-based checks must fail.
    #[serde(default)]
    pub corrupt_state_at_step: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Terminal contraction factor required by the stability check.
    #[serde(default = "default_epsilon")]
    pub stability_epsilon: f64,
    /// Output directory; a command line `--out` takes precedence.
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_one() -> f64 {
    1.0
}

fn default_coefficient() -> CoefficientConfig {
    CoefficientConfig::Number(1.0)
}

fn default_part_dim() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Heat2d {
        #[serde(default = "default_one")]
        lx: f64,
        #[serde(default = "default_one")]
        ly: f64,
        nx: usize,
        ny: usize,
        #[serde(default = "default_one")]
        diffusivity: f64,
        profile: HeatProfileConfig,
    },
    Timoshenko {
        #[serde(default = "default_coefficient")]
        shear_stiffness: CoefficientConfig,
        #[serde(default = "default_coefficient")]
        mass_density: CoefficientConfig,
        #[serde(default = "default_coefficient")]
        flexural_rigidity: CoefficientConfig,
        #[serde(default = "default_coefficient")]
        rotational_inertia: CoefficientConfig,
        grid_points: usize,
        /// Grid-scale smoothing override; the preset default applies when
        /// absent.
        #[serde(default)]
        interior_dissipation: Option<f64>,
    },
    Transport {
        grid_points: usize,
    },
    /// State-space matrices loaded from plain-text files, resolved
    /// relative to the config file.
    CustomNode {
        a: String,
        b: String,
        c: String,
        d: String,
    },
}

impl ModelConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelConfig::Heat2d { .. } => "heat2d",
            ModelConfig::Timoshenko { .. } => "timoshenko",
            ModelConfig::Transport { .. } => "transport",
            ModelConfig::CustomNode { .. } => "custom-node",
        }
    }
}

/// Scalar material coefficient: a bare number means a constant profile.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum CoefficientConfig {
    Number(f64),
    Profile(CoefficientProfile),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientProfile {
    Constant { value: f64 },
    /// Linear interpolation between the endpoint values.
    Linear { left: f64, right: f64 },
    /// base * exp(rate * theta) with theta the normalized position.
    Exponential { base: f64, rate: f64 },
}

impl CoefficientConfig {
    fn eval(&self, theta: f64) -> f64 {
        match self {
            CoefficientConfig::Number(v) => *v,
            CoefficientConfig::Profile(CoefficientProfile::Constant { value }) => *value,
            CoefficientConfig::Profile(CoefficientProfile::Linear { left, right }) => {
                left * (1.0 - theta) + right * theta
            }
            CoefficientConfig::Profile(CoefficientProfile::Exponential { base, rate }) => {
                base * (rate * theta).exp()
            }
        }
    }

    fn is_constant(&self) -> bool {
        matches!(
            self,
            CoefficientConfig::Number(_)
                | CoefficientConfig::Profile(CoefficientProfile::Constant { .. })
        )
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HeatProfileConfig {
    Zero,
    UniformEdge { edge: EdgeConfig },
    GaussianBump { center: f64, width: f64 },
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeConfig {
    Bottom,
    Right,
    Top,
    Left,
}

impl EdgeConfig {
    fn to_edge(self) -> Edge {
        match self {
            EdgeConfig::Bottom => Edge::Bottom,
            EdgeConfig::Right => Edge::Right,
            EdgeConfig::Top => Edge::Top,
            EdgeConfig::Left => Edge::Left,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapConfig {
    Zero,
    Saturation {
        /// Declared sector constant for the checks; the true constant when
        /// absent. Over-claiming builds a failing fixture on purpose.
        #[serde(default)]
        kappa: Option<f64>,
    },
    LinearGain {
        gain: f64,
    },
    Deadzone {
        threshold: f64,
        #[serde(default)]
        kappa: Option<f64>,
    },
    /// u -> -u declared monotone: the designed negative control.
    Negated,
    Componentwise {
        parts: Vec<PartConfig>,
    },
}

impl MapConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MapConfig::Zero => "zero",
            MapConfig::Saturation { .. } => "saturation",
            MapConfig::LinearGain { .. } => "linear-gain",
            MapConfig::Deadzone { .. } => "deadzone",
            MapConfig::Negated => "negated",
            MapConfig::Componentwise { .. } => "componentwise",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartConfig {
    #[serde(default = "default_part_dim")]
    pub dim: usize,
    pub map: MapConfig,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Zero,
    Uniform {
        value: f64,
    },
    RandomBall {
        radius: f64,
    },
    File {
        path: String,
    },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    #[default]
    Zero,
    Step {
        amplitude: f64,
        #[serde(default)]
        start: f64,
        /// Restrict to one port; all ports when absent.
        #[serde(default)]
        channel: Option<usize>,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        channel: Option<usize>,
    },
    /// Plain-text matrix, one row per step, one column per port.
    File {
        path: String,
    },
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Passivity,
    Sector,
    Incremental,
    Contraction,
    EnergyDecay,
    Stability,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Passivity => "passivity",
            CheckKind::Sector => "sector",
            CheckKind::Incremental => "incremental",
            CheckKind::Contraction => "contraction",
            CheckKind::EnergyDecay => "energy-decay",
            CheckKind::Stability => "stability",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Time step of the integrator.
    Step,
    /// Gain of a linear-gain nonlinearity.
    Gain,
    /// Amplitude of a step or sine input.
    Amplitude,
    /// Grid resolution of a beam or transport model.
    GridPoints,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Step => "step",
            SweepParameter::Gain => "gain",
            SweepParameter::Amplitude => "amplitude",
            SweepParameter::GridPoints => "grid-points",
        }
    }
}

/// Config wrapper accepted by the audit and spectrum verbs. Unknown fields
/// are tolerated so a full scenario document works unchanged.
#[derive(Clone, Debug, Deserialize)]
pub struct ModelOnlyConfig {
    pub model: ModelConfig,
}

// ---------------------------------------------------------------------------
// Loading

/// Parse a JSON config of any schema type, labeling errors with the path.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Directory that relative file references inside a config resolve against.
pub fn config_base_dir(config_path: &Path) -> PathBuf {
    match config_path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

// ---------------------------------------------------------------------------
// Model construction

/// A model built from config: the node to integrate plus whatever physical
/// structure the kind carries.
pub enum BuiltModel {
    Heat(Box<HeatModel>),
    Phs {
        spec: Box<PhsSpec>,
        model: Box<PhsModel>,
    },
    Custom(SystemNode),
}

impl BuiltModel {
    /// The node trajectories are integrated on. Boundary-controlled models
    /// expose the projected interior dynamics here; the augmented boundary
    /// form stays available through [`BuiltModel::Phs`].
    pub fn node(&self) -> &SystemNode {
        match self {
            BuiltModel::Heat(m) => m.node(),
            BuiltModel::Phs { model, .. } => model.field_node(),
            BuiltModel::Custom(n) => n,
        }
    }

    /// Project a raw state onto the model's admissible set: constraint
    /// manifold and realness for the physical models, identity for custom
    /// nodes.
    pub fn project_state(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        match self {
            BuiltModel::Phs { model, .. } => {
                let physical = model.state_to_physical(v)?;
                model.physical_to_state(&physical)
            }
            BuiltModel::Heat(_) | BuiltModel::Custom(_) => Ok(v.clone()),
        }
    }

    fn physical_dim(&self) -> usize {
        match self {
            BuiltModel::Heat(m) => m.cells(),
            BuiltModel::Phs { model, .. } => model.n_fields() * model.grid_points(),
            BuiltModel::Custom(n) => n.state_dim(),
        }
    }

    fn physical_to_state(&self, z: &DVector<f64>) -> Result<DVector<Complex64>> {
        match self {
            BuiltModel::Heat(m) => m.physical_to_state(z),
            BuiltModel::Phs { model, .. } => model.physical_to_state(z),
            BuiltModel::Custom(_) => Ok(z.map(|v| Complex64::new(v, 0.0))),
        }
    }
}

pub fn build_model(config: &ModelConfig, base_dir: &Path) -> Result<BuiltModel> {
    match config {
        ModelConfig::Heat2d {
            lx,
            ly,
            nx,
            ny,
            diffusivity,
            profile,
        } => {
            let profile = match profile {
                HeatProfileConfig::Zero => BoundaryProfile::Zero,
                HeatProfileConfig::UniformEdge { edge } => {
                    BoundaryProfile::UniformEdge(edge.to_edge())
                }
                HeatProfileConfig::GaussianBump { center, width } => BoundaryProfile::GaussianBump {
                    center: *center,
                    width: *width,
                },
            };
            let spec = HeatSpec {
                lx: *lx,
                ly: *ly,
                nx: *nx,
                ny: *ny,
                diffusivity: *diffusivity,
                profile,
            };
            Ok(BuiltModel::Heat(Box::new(spec.build()?)))
        }
        ModelConfig::Timoshenko {
            shear_stiffness,
            mass_density,
            flexural_rigidity,
            rotational_inertia,
            grid_points,
            interior_dissipation,
        } => {
            let mut spec = timoshenko_preset(
                shear_stiffness.eval(0.0),
                mass_density.eval(0.0),
                flexural_rigidity.eval(0.0),
                rotational_inertia.eval(0.0),
                *grid_points,
            );
            let coeffs = [
                shear_stiffness.clone(),
                mass_density.clone(),
                flexural_rigidity.clone(),
                rotational_inertia.clone(),
            ];
            if coeffs.iter().any(|c| !c.is_constant()) {
                // The preset interval is (0, 1), so the physical position
                // doubles as the normalized one.
                spec.hamiltonian = CoefficientField::Custom(std::sync::Arc::new(move |zeta| {
                    let k = coeffs[0].eval(zeta);
                    let rho = coeffs[1].eval(zeta);
                    let ei = coeffs[2].eval(zeta);
                    let irho = coeffs[3].eval(zeta);
                    DMatrix::from_diagonal(&DVector::from_vec(vec![
                        k,
                        1.0 / rho,
                        ei,
                        1.0 / irho,
                    ]))
                }));
            }
            if let Some(c) = interior_dissipation {
                spec.interior_dissipation = *c;
            }
            let model = spec.discretize()?;
            Ok(BuiltModel::Phs {
                spec: Box::new(spec),
                model: Box::new(model),
            })
        }
        ModelConfig::Transport { grid_points } => {
            let spec = transport_preset(*grid_points);
            let model = spec.discretize()?;
            Ok(BuiltModel::Phs {
                spec: Box::new(spec),
                model: Box::new(model),
            })
        }
        ModelConfig::CustomNode { a, b, c, d } => {
            let read = |name: &str, rel: &str| -> Result<DMatrix<Complex64>> {
                matio::read_matrix(&base_dir.join(rel))
                    .map_err(|e| Error::Config(format!("model.{name}: {e}")))
            };
            let node = SystemNode::new(
                read("a", a)?,
                read("b", b)?,
                read("c", c)?,
                read("d", d)?,
            )?;
            Ok(BuiltModel::Custom(node))
        }
    }
}

// ---------------------------------------------------------------------------
// Nonlinearity construction

/// The feedback map together with the sector constant the config declares
/// for it. The declared constant feeds the checks verbatim, so an
/// over-claimed value produces honest failures.
pub struct BuiltMap {
    pub map: MonotoneMap,
    pub declared_kappa: Option<f64>,
}

impl BuiltMap {
    pub fn effective_kappa(&self) -> Kappa {
        match self.declared_kappa {
            Some(k) => Kappa::Finite(k),
            None => self.map.kappa(),
        }
    }
}

pub fn build_map(config: &MapConfig, dim: usize) -> Result<BuiltMap> {
    let declared = match config {
        MapConfig::Saturation { kappa } | MapConfig::Deadzone { kappa, .. } => *kappa,
        _ => None,
    };
    if let Some(k) = declared {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Config(format!(
                "nonlinearity.kappa must be positive and finite, got {k}"
            )));
        }
    }
    let map = build_map_inner(config, dim)?;
    Ok(BuiltMap {
        map,
        declared_kappa: declared,
    })
}

fn build_map_inner(config: &MapConfig, dim: usize) -> Result<MonotoneMap> {
    match config {
        MapConfig::Zero => MonotoneMap::zero(dim),
        MapConfig::Saturation { .. } => MonotoneMap::saturation(dim),
        MapConfig::LinearGain { gain } => MonotoneMap::linear_gain(dim, *gain),
        MapConfig::Deadzone { threshold, .. } => MonotoneMap::deadzone(dim, *threshold),
        MapConfig::Negated => Ok(MonotoneMap::custom(
            dim,
            |u: &DVector<Complex64>| u.map(|z| -z),
            Kappa::Finite(1.0),
            "negated",
        )?
        .with_lipschitz(1.0)
        .with_real_on_real()),
        MapConfig::Componentwise { parts } => {
            let total: usize = parts.iter().map(|p| p.dim).sum();
            if total != dim {
                return Err(Error::Config(format!(
                    "nonlinearity.parts dimensions sum to {total}, model has {dim} ports"
                )));
            }
            let mut maps = Vec::with_capacity(parts.len());
            for part in parts {
                maps.push(build_map_inner(&part.map, part.dim)?);
            }
            MonotoneMap::componentwise(maps)
        }
    }
}

// ---------------------------------------------------------------------------
// Initial condition and input signal

fn build_initial(
    config: &InitialConfig,
    model: &BuiltModel,
    base_dir: &Path,
    seed: u64,
) -> Result<DVector<Complex64>> {
    let state_dim = model.node().state_dim();
    match config {
        InitialConfig::Zero => Ok(DVector::zeros(state_dim)),
        InitialConfig::Uniform { value } => {
            if !value.is_finite() {
                return Err(Error::Config(format!(
                    "initial.value must be finite, got {value}"
                )));
            }
            let z = DVector::from_element(model.physical_dim(), *value);
            model.physical_to_state(&z)
        }
        InitialConfig::RandomBall { radius } => {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(Error::Config(format!(
                    "initial.radius must be positive and finite, got {radius}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = sample_ball(&mut rng, state_dim, *radius);
            model.project_state(&raw)
        }
        InitialConfig::File { path } => {
            let full = base_dir.join(path);
            let v = matio::read_vector(&full)
                .map_err(|e| Error::Config(format!("initial.path: {e}")))?;
            match model {
                BuiltModel::Custom(_) => {
                    if v.len() != state_dim {
                        return Err(Error::Config(format!(
                            "initial.path: expected {state_dim} state entries, got {}",
                            v.len()
                        )));
                    }
                    Ok(v)
                }
                _ => {
                    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
                    if !is_real(&m, 1e-12) {
                        return Err(Error::Config(
                            "initial.path: physical initial data must be real".into(),
                        ));
                    }
                    let z = DVector::from_column_slice(realify(&m).as_slice());
                    if z.len() != model.physical_dim() {
                        return Err(Error::Config(format!(
                            "initial.path: expected {} physical entries, got {}",
                            model.physical_dim(),
                            z.len()
                        )));
                    }
                    model.physical_to_state(&z)
                }
            }
        }
    }
}

type InputFn = Box<dyn Fn(f64) -> DVector<Complex64>>;

fn build_input(
    config: &InputConfig,
    io_dim: usize,
    step: f64,
    n_steps: usize,
    base_dir: &Path,
) -> Result<InputFn> {
    let channel_vector = |amplitude: f64, channel: Option<usize>| -> Result<DVector<Complex64>> {
        let mut v = DVector::zeros(io_dim);
        match channel {
            Some(c) if c >= io_dim => Err(Error::Config(format!(
                "input.channel {c} out of range for {io_dim} ports"
            ))),
            Some(c) => {
                v[c] = Complex64::new(amplitude, 0.0);
                Ok(v)
            }
            None => {
                v.fill(Complex64::new(amplitude, 0.0));
                Ok(v)
            }
        }
    };
    match config {
        InputConfig::Zero => Ok(Box::new(move |_| DVector::zeros(io_dim))),
        InputConfig::Step {
            amplitude,
            start,
            channel,
        } => {
            let on = channel_vector(*amplitude, *channel)?;
            let off = DVector::zeros(io_dim);
            let start = *start;
            Ok(Box::new(move |t| {
                if t >= start {
                    on.clone()
                } else {
                    off.clone()
                }
            }))
        }
        InputConfig::Sine {
            amplitude,
            frequency,
            phase,
            channel,
        } => {
            let shape = channel_vector(1.0, *channel)?;
            let (amplitude, frequency, phase) = (*amplitude, *frequency, *phase);
            Ok(Box::new(move |t| {
                let s = amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin();
                &shape * Complex64::new(s, 0.0)
            }))
        }
        InputConfig::File { path } => {
            let full = base_dir.join(path);
            let m = matio::read_matrix(&full)
                .map_err(|e| Error::Config(format!("input.path: {e}")))?;
            if m.ncols() != io_dim {
                return Err(Error::Config(format!(
                    "input.path: expected {io_dim} columns, got {}",
                    m.ncols()
                )));
            }
            if m.nrows() < n_steps {
                return Err(Error::Config(format!(
                    "input.path: {} rows cover fewer than the {n_steps} steps of the run",
                    m.nrows()
                )));
            }
            let last = m.nrows() - 1;
            Ok(Box::new(move |t| {
                let k = ((t / step).round() as usize).min(last);
                m.row(k).transpose()
            }))
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario execution

/// Everything one scenario run produces before any file is written.
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub reports: Vec<VerificationReport>,
    pub closed_loop_abscissa: Option<f64>,
    pub exit_code: i32,
}

/// The checks a config actually runs: the explicit list, or the default of
/// passivity plus sector, extended by the decay checks when nothing forces
/// the loop.
pub fn effective_checks(config: &ScenarioConfig) -> Vec<CheckKind> {
    if !config.checks.is_empty() {
        return config.checks.clone();
    }
    let mut checks = vec![CheckKind::Passivity, CheckKind::Sector];
    if matches!(config.input, InputConfig::Zero) {
        checks.push(CheckKind::EnergyDecay);
        checks.push(CheckKind::Stability);
    }
    checks
}

/// Aggregate exit code of a report list: 2 if anything failed, else 3 if
/// anything was skipped, else 0.
pub fn exit_code(reports: &[VerificationReport]) -> i32 {
    if reports.iter().any(|r| r.failed()) {
        2
    } else if reports.iter().any(|r| r.skipped()) {
        3
    } else {
        0
    }
}

/// Exit code for an error that escaped a driver: solver breakdowns count as
/// check failures, everything else is an input problem.
pub fn error_exit_code(err: &Error) -> i32 {
    if is_runtime_error(err) {
        2
    } else {
        1
    }
}

fn is_runtime_error(err: &Error) -> bool {
    matches!(
        err,
        Error::NoConvergence { .. } | Error::Singular { .. }
    )
}

fn synthesized_failure(name: &str, details: String) -> VerificationReport {
    VerificationReport {
        name: name.into(),
        status: CheckStatus::Fail,
        margin: f64::NEG_INFINITY,
        worst_index: None,
        tolerance: CHECK_TOL,
        details,
    }
}

fn validate_run_params(config: &ScenarioConfig) -> Result<usize> {
    if !(config.step.is_finite() && config.step > 0.0) {
        return Err(Error::Config(format!(
            "step must be positive and finite, got {}",
            config.step
        )));
    }
    if !(config.horizon.is_finite() && config.horizon > 0.0) {
        return Err(Error::Config(format!(
            "horizon must be positive and finite, got {}",
            config.horizon
        )));
    }
    let n_steps = (config.horizon / config.step + 1e-9).floor() as usize;
    if n_steps == 0 {
        return Err(Error::Config(format!(
            "horizon {} is shorter than one step {}",
            config.horizon, config.step
        )));
    }
    Ok(n_steps)
}

/// Build everything a scenario describes, integrate, and verify. No files
/// are touched; [`run_scenario`] adds the writers on top.
pub fn execute_scenario(
    config: &ScenarioConfig,
    base_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunOutcome> {
    let n_steps = validate_run_params(config)?;
    let seed = seed_override.or(config.seed).unwrap_or(DEFAULT_SEED);
    let model = build_model(&config.model, base_dir)?;
    let node = model.node();
    let built = build_map(&config.nonlinearity, node.io_dim())?;
    let x0 = build_initial(&config.initial, &model, base_dir, seed)?;
    let input = build_input(&config.input, node.io_dim(), config.step, n_steps, base_dir)?;
    let abscissa = node
        .closed_loop_matrix()
        .ok()
        .and_then(|m| spectral_abscissa(&m).ok());

    let mut traj = match integrate(node, &built.map, &x0, &*input, config.step, n_steps) {
        Ok(t) => t,
        Err(boxed) => {
            if is_runtime_error(&boxed.source) {
                let report = synthesized_failure(
                    "integration",
                    format!("step {}: {}", boxed.step_index, boxed.source),
                );
                return Ok(RunOutcome {
                    trajectory: boxed.partial,
                    reports: vec![report],
                    closed_loop_abscissa: abscissa,
                    exit_code: 2,
                });
            }
            return Err(boxed.source);
        }
    };

    if let Some(k) = config.corrupt_state_at_step {
        if k >= traj.states.len() {
            return Err(Error::Config(format!(
                "corrupt_state_at_step {k} is outside the run (0..{})",
                traj.states.len()
            )));
        }
        traj.states[k] *= Complex64::new(3.0, 0.0);
    }

    let checks = effective_checks(config);
    let needs_twin = checks
        .iter()
        .any(|c| matches!(c, CheckKind::Incremental | CheckKind::Contraction));
    // The twin starts from a perturbed admissible state and sees the same
    // input, so pairwise checks compare two genuine runs of the same loop.
    let twin: Option<std::result::Result<Trajectory, Error>> = if needs_twin {
        match build_twin(&model, &built.map, &x0, &*input, config.step, n_steps, seed) {
            Ok(t) => Some(Ok(t)),
            Err(e) if is_runtime_error(&e) => Some(Err(e)),
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let forced = !traj.input_is_zero(1e-12);
    let mut reports = Vec::with_capacity(checks.len());
    for check in &checks {
        let outcome: Result<VerificationReport> = match check {
            CheckKind::Passivity => passivity_check(&traj),
            CheckKind::Sector => {
                let kappa = match built.effective_kappa() {
                    Kappa::Finite(k) => k,
                    Kappa::Unbounded => 0.0,
                };
                built
                    .map
                    .check_incremental_sector(kappa, SECTOR_SAMPLES, SECTOR_RADIUS, seed)
            }
            CheckKind::Incremental => match twin.as_ref().unwrap() {
                Ok(tw) => incremental_check(&traj, tw, built.effective_kappa()),
                Err(e) => Ok(synthesized_failure("incremental-estimate", e.to_string())),
            },
            CheckKind::Contraction => {
                if forced {
                    Ok(VerificationReport::skip(
                        "contraction",
                        "loop is forced; nonexpansiveness is asserted for zero input only",
                    ))
                } else {
                    match twin.as_ref().unwrap() {
                        Ok(tw) => contraction_check(&traj, tw),
                        Err(e) => Ok(synthesized_failure("contraction", e.to_string())),
                    }
                }
            }
            CheckKind::EnergyDecay => {
                if forced {
                    Ok(VerificationReport::skip(
                        "energy-decay",
                        "loop is forced; monotone energy is asserted for zero input only",
                    ))
                } else {
                    energy_decay_check(&traj)
                }
            }
            CheckKind::Stability => {
                if forced {
                    Ok(VerificationReport::skip(
                        "stability",
                        "loop is forced; decay to zero is asserted for zero input only",
                    ))
                } else {
                    stability_check(node, &traj, config.stability_epsilon)
                }
            }
        };
        match outcome {
            Ok(r) => reports.push(r),
            Err(e) if is_runtime_error(&e) => {
                reports.push(synthesized_failure(check.name(), e.to_string()))
            }
            Err(e) => return Err(e),
        }
    }

    let code = exit_code(&reports);
    Ok(RunOutcome {
        trajectory: traj,
        reports,
        closed_loop_abscissa: abscissa,
        exit_code: code,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_twin(
    model: &BuiltModel,
    phi: &MonotoneMap,
    x0: &DVector<Complex64>,
    input: &dyn Fn(f64) -> DVector<Complex64>,
    step: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TWIN_SEED_SALT);
    let radius = 0.25 * (1.0 + x0.norm());
    let delta = sample_ball(&mut rng, x0.len(), radius);
    let x0b = model.project_state(&(x0 + delta))?;
    integrate(model.node(), phi, &x0b, input, step, n_steps).map_err(|e| e.source)
}

// ---------------------------------------------------------------------------
// File writers

fn format_signal(z: Complex64) -> String {
    // Real-on-real systems keep signals exactly real; print them plainly
    // and fall back to the a+bi form otherwise.
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        matio::format_complex(z)
    }
}

/// Write the trajectory table: time, state norm, energy, then output,
/// input, and feedback components, then the solver residual of the step
/// that produced the row's successor. The terminal row carries state
/// columns only.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let m = traj.io_dim();
    let n = traj.n_steps();
    let mut out = String::new();
    out.push_str("t,state_norm,energy");
    for j in 0..m {
        out.push_str(&format!(",y{j}"));
    }
    for j in 0..m {
        out.push_str(&format!(",u{j}"));
    }
    for j in 0..m {
        out.push_str(&format!(",phi{j}"));
    }
    out.push_str(",residual\n");
    for k in 0..=n {
        let x = &traj.states[k];
        out.push_str(&format!(
            "{},{},{}",
            traj.step * k as f64,
            x.norm(),
            0.5 * norm_sq(x)
        ));
        if k < n {
            for series in [&traj.outputs, &traj.inputs, &traj.feedbacks] {
                for j in 0..m {
                    out.push(',');
                    out.push_str(&format_signal(series[k][j]));
                }
            }
            out.push_str(&format!(",{}\n", traj.residuals[k]));
        } else {
            for _ in 0..3 * m + 1 {
                out.push(',');
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Status word of a report, as it appears in the display line.
pub fn status_label(r: &VerificationReport) -> &'static str {
    match r.status {
        CheckStatus::Pass => "PASS",
        CheckStatus::Fail => "FAIL",
        CheckStatus::Skipped { .. } => "SKIPPED",
    }
}

/// Write the check report: commented context lines, then one line per
/// check in the order they ran.
pub fn write_report(path: &Path, context: &[String], reports: &[VerificationReport]) -> Result<()> {
    let mut out = String::new();
    for line in context {
        out.push_str(&format!("# {line}\n"));
    }
    for r in reports {
        out.push_str(&format!("{r}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_run_plot_script(path: &Path) -> Result<()> {
    let script = "\
set datafile separator ','
set key autotitle columnhead
set grid
set xlabel 't'
plot 'trajectory.csv' using 1:2 with lines title 'state norm', \\
     '' using 1:3 with lines title 'energy'
";
    std::fs::write(path, script)?;
    Ok(())
}

fn run_context(config: &ScenarioConfig, outcome: &RunOutcome, seed: u64) -> Vec<String> {
    let node_dims = format!(
        "state dim {}, io dim {}",
        outcome.trajectory.state_dim(),
        outcome.trajectory.io_dim()
    );
    let mut lines = vec![
        format!("model: {} ({node_dims})", config.model.kind_name()),
        format!("nonlinearity: {}", config.nonlinearity.kind_name()),
        format!(
            "step: {}  horizon: {}  steps: {}",
            config.step,
            config.horizon,
            outcome.trajectory.n_steps()
        ),
        format!("seed: {seed}"),
    ];
    if let Some(a) = outcome.closed_loop_abscissa {
        lines.push(format!("closed-loop spectral abscissa: {a:.6e}"));
    }
    lines
}

/// Run one scenario and write `trajectory.csv`, `report.txt`, and
/// `plot.gp` into the output directory. Returns the outcome so the caller
/// can print the report lines and exit with the aggregate code.
pub fn run_scenario(
    config: &ScenarioConfig,
    base_dir: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunOutcome> {
    let outcome = execute_scenario(config, base_dir, seed_override)?;
    std::fs::create_dir_all(out_dir)?;
    let seed = seed_override.or(config.seed).unwrap_or(DEFAULT_SEED);
    write_trajectory_csv(&out_dir.join("trajectory.csv"), &outcome.trajectory)?;
    write_report(
        &out_dir.join("report.txt"),
        &run_context(config, &outcome, seed),
        &outcome.reports,
    )?;
    write_run_plot_script(&out_dir.join("plot.gp"))?;
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Sweep

/// One row of a sweep: the parameter value with the reports and diagnostics
/// of its run.
pub struct SweepRow {
    pub value: f64,
    pub final_norm: f64,
    pub reports: Vec<VerificationReport>,
    pub closed_loop_abscissa: Option<f64>,
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub checks: Vec<CheckKind>,
    pub exit_code: i32,
}

/// Substitute one swept value into a scenario.
pub fn apply_sweep_value(
    scenario: &ScenarioConfig,
    parameter: SweepParameter,
    value: f64,
) -> Result<ScenarioConfig> {
    let mut cfg = scenario.clone();
    match parameter {
        SweepParameter::Step => {
            cfg.step = value;
        }
        SweepParameter::Gain => match &mut cfg.nonlinearity {
            MapConfig::LinearGain { gain } => *gain = value,
            other => {
                return Err(Error::Config(format!(
                    "gain sweep needs a linear-gain nonlinearity, config has {}",
                    other.kind_name()
                )))
            }
        },
        SweepParameter::Amplitude => match &mut cfg.input {
            InputConfig::Step { amplitude, .. } | InputConfig::Sine { amplitude, .. } => {
                *amplitude = value
            }
            _ => {
                return Err(Error::Config(
                    "amplitude sweep needs a step or sine input".into(),
                ))
            }
        },
        SweepParameter::GridPoints => {
            if !(value.is_finite() && value > 0.0 && value.fract() == 0.0) {
                return Err(Error::Config(format!(
                    "grid-points sweep needs positive integers, got {value}"
                )));
            }
            let n = value as usize;
            match &mut cfg.model {
                ModelConfig::Timoshenko { grid_points, .. }
                | ModelConfig::Transport { grid_points } => *grid_points = n,
                other => {
                    return Err(Error::Config(format!(
                        "grid-points sweep needs a beam or transport model, config has {}",
                        other.kind_name()
                    )))
                }
            }
        }
    }
    Ok(cfg)
}

/// Worker count for a sweep: the `PASSIVE_LAB_THREADS` value when set,
/// otherwise the available parallelism capped at 8, never more than the
/// number of jobs.
pub fn worker_count(n_jobs: usize, env_value: Option<&str>) -> Result<usize> {
    let cap = match env_value {
        Some(text) => match text.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                return Err(Error::Config(format!(
                    "PASSIVE_LAB_THREADS must be a positive integer, got {text:?}"
                )))
            }
        },
        None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(8),
    };
    Ok(cap.max(1).min(n_jobs.max(1)))
}

/// Run one scenario per value concurrently and collect the rows in value
/// order. Scenarios never share mutable state; parallelism stays across
/// scenarios only.
pub fn run_sweep(config: &SweepConfig, base_dir: &Path, out_dir: &Path) -> Result<SweepOutcome> {
    if config.values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let derived: Vec<ScenarioConfig> = config
        .values
        .iter()
        .map(|&v| apply_sweep_value(&config.scenario, config.parameter, v))
        .collect::<Result<_>>()?;
    for cfg in &derived {
        validate_run_params(cfg)?;
    }
    // Surface input problems (missing files, dimension mismatches) before
    // any thread starts.
    {
        let probe = &derived[0];
        let model = build_model(&probe.model, base_dir)?;
        build_map(&probe.nonlinearity, model.node().io_dim())?;
    }
    let checks = effective_checks(&config.scenario);
    let workers = worker_count(
        derived.len(),
        std::env::var("PASSIVE_LAB_THREADS").ok().as_deref(),
    )?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SweepRow>>>> =
        Mutex::new((0..derived.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= derived.len() {
                    break;
                }
                let result = execute_scenario(&derived[i], base_dir, None).map(|outcome| SweepRow {
                    value: config.values[i],
                    final_norm: outcome.trajectory.final_state().norm(),
                    reports: outcome.reports,
                    closed_loop_abscissa: outcome.closed_loop_abscissa,
                });
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let mut rows = Vec::with_capacity(derived.len());
    for slot in slots.into_inner().unwrap() {
        rows.push(slot.expect("worker filled every slot")?);
    }
    let exit = rows
        .iter()
        .map(|r| exit_code(&r.reports))
        .fold(0, |acc, c| match (acc, c) {
            (2, _) | (_, 2) => 2,
            (3, _) | (_, 3) => 3,
            _ => acc.max(c),
        });

    std::fs::create_dir_all(out_dir)?;
    write_sweep_csv(&out_dir.join("sweep.csv"), config, &checks, &rows)?;
    Ok(SweepOutcome {
        rows,
        checks,
        exit_code: exit,
    })
}

/// Summary table: one row per swept value with the final state norm, the
/// worst margin of each check, and the closed-loop spectral abscissa.
/// Skipped or missing checks leave their cell empty.
fn write_sweep_csv(
    path: &Path,
    config: &SweepConfig,
    checks: &[CheckKind],
    rows: &[SweepRow],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(config.parameter.name());
    out.push_str(",final_norm");
    for c in checks {
        out.push_str(&format!(",{}_margin", c.name()));
    }
    out.push_str(",abscissa\n");
    for row in rows {
        out.push_str(&format!("{},{}", row.value, row.final_norm));
        for c in checks {
            out.push(',');
            let report = row.reports.iter().find(|r| {
                r.name == c.name()
                    || (*c == CheckKind::Sector && r.name == "incremental-sector")
                    || (*c == CheckKind::Incremental && r.name == "incremental-estimate")
            });
            if let Some(r) = report {
                if !r.skipped() && r.margin.is_finite() {
                    out.push_str(&format!("{}", r.margin));
                }
            }
        }
        out.push(',');
        if let Some(a) = row.closed_loop_abscissa {
            out.push_str(&format!("{a}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Audit

pub struct AuditOutcome {
    pub text: String,
    pub passed: bool,
}

/// Structural audit of the model in a config: the boundary-structure
/// report for the distributed presets, passivity and spectrum facts for
/// the rest. Writes `audit.txt`.
pub fn run_audit(config: &ModelOnlyConfig, base_dir: &Path, out_dir: &Path) -> Result<AuditOutcome> {
    let model = build_model(&config.model, base_dir)?;
    let mut text = String::new();
    let passed;
    match &model {
        BuiltModel::Phs { spec, model } => {
            let audit = spec.audit()?;
            let field_margin = model.field_node().impedance_passivity_margin();
            let boundary_margin = model.boundary_node().boundary_passivity_margin();
            let converted_margin = model
                .boundary_node()
                .to_system_node()?
                .impedance_passivity_margin();
            text.push_str(&format!("model: {}\n", config.model.kind_name()));
            text.push_str(&format!("{audit}\n"));
            text.push_str(&format!(
                "field node passivity margin: {field_margin:.6e}\n"
            ));
            text.push_str(&format!(
                "boundary node passivity margin: {boundary_margin:.6e}\n"
            ));
            text.push_str(&format!(
                "converted node passivity margin: {converted_margin:.6e}\n"
            ));
            passed = audit.passed()
                && field_margin <= 1e-10
                && boundary_margin <= 1e-10
                && converted_margin <= 1e-10;
        }
        BuiltModel::Heat(heat) => {
            let margin = heat.node().impedance_passivity_margin();
            let integral = heat.boundary_integral();
            let a_k = heat.node().closed_loop_matrix()?;
            let abscissa = spectral_abscissa(&a_k)?;
            let zero_mode = zero_in_spectrum(&a_k, 1e-10)?;
            text.push_str("model: heat2d\n");
            text.push_str(&format!("passivity margin: {margin:.6e}\n"));
            text.push_str(&format!("boundary profile integral: {integral:.6e}\n"));
            text.push_str(&format!(
                "closed-loop spectral abscissa: {abscissa:.6e}\n"
            ));
            text.push_str(&format!("zero eigenvalue present: {zero_mode}\n"));
            passed = margin <= 1e-10;
        }
        BuiltModel::Custom(node) => {
            let margin = node.impedance_passivity_margin();
            let a_k = node.closed_loop_matrix()?;
            let abscissa = spectral_abscissa(&a_k)?;
            text.push_str("model: custom-node\n");
            text.push_str(&format!("passivity margin: {margin:.6e}\n"));
            text.push_str(&format!(
                "closed-loop spectral abscissa: {abscissa:.6e}\n"
            ));
            if let Ok(c) = node.coercivity_margin(Complex64::new(1.0, 0.0)) {
                text.push_str(&format!("coercivity margin at 1: {c:.6e}\n"));
            }
            passed = margin <= 1e-10;
        }
    }
    // The boundary audit display carries a verdict of its own; this line
    // states the aggregate over every fact above it.
    text.push_str(if passed {
        "aggregate: PASS\n"
    } else {
        "aggregate: FAIL\n"
    });
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("audit.txt"), &text)?;
    Ok(AuditOutcome { text, passed })
}

// ---------------------------------------------------------------------------
// Spectrum

pub struct SpectrumOutcome {
    pub open_abscissa: f64,
    pub closed_abscissa: f64,
    pub text: String,
}

/// Eigenvalues of the open loop A and the identity-feedback closed loop
/// A - B(I+D)^{-1}C, written as `spectrum.csv` with a scatter script.
pub fn run_spectrum(
    config: &ModelOnlyConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<SpectrumOutcome> {
    let model = build_model(&config.model, base_dir)?;
    let node = model.node();
    let mut open = crate::linalg::eigenvalues(node.a())?;
    let mut closed = crate::linalg::eigenvalues(&node.closed_loop_matrix()?)?;
    let order = |a: &Complex64, b: &Complex64| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    open.sort_by(order);
    closed.sort_by(order);
    let open_abscissa = open.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let closed_abscissa = closed.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);

    let mut csv = String::from("loop,re,im\n");
    for z in &open {
        csv.push_str(&format!("open,{},{}\n", z.re, z.im));
    }
    for z in &closed {
        csv.push_str(&format!("closed,{},{}\n", z.re, z.im));
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("spectrum.csv"), &csv)?;
    let script = "\
set datafile separator ','
set key autotitle columnhead
set grid
set xlabel 'Re'
set ylabel 'Im'
set xzeroaxis
set yzeroaxis
plot 'spectrum.csv' using (strcol(1) eq 'open' ? $2 : 1/0):3 with points pt 7 title 'open loop', \\
     '' using (strcol(1) eq 'closed' ? $2 : 1/0):3 with points pt 6 title 'closed loop'
";
    std::fs::write(out_dir.join("plot.gp"), script)?;
    let text = format!(
        "model: {}\nopen-loop spectral abscissa: {open_abscissa:.6e}\nclosed-loop spectral abscissa: {closed_abscissa:.6e}\n",
        config.model.kind_name()
    );
    Ok(SpectrumOutcome {
        open_abscissa,
        closed_abscissa,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat_config(profile: &str, checks: &str) -> ScenarioConfig {
        let text = format!(
            r#"{{
                "model": {{ "kind": "heat2d", "nx": 3, "ny": 3, {profile} }},
                "nonlinearity": {{ "kind": "saturation" }},
                "initial": {{ "kind": "uniform", "value": 1.0 }},
                "horizon": 4.0,
                "step": 0.05,
                "checks": [{checks}],
                "seed": 5
            }}"#
        );
        serde_json::from_str(&text).expect("valid test config")
    }

    const BOTTOM_EDGE: &str = r#""profile": { "kind": "uniform-edge", "edge": "bottom" }"#;

    #[test]
    fn defaults_fill_in_when_fields_are_omitted() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{
                "model": { "kind": "transport", "grid_points": 6 },
                "nonlinearity": { "kind": "saturation" },
                "horizon": 1.0,
                "step": 0.1
            }"#,
        )
        .expect("minimal config parses");
        assert!(matches!(cfg.initial, InitialConfig::Zero));
        assert!(matches!(cfg.input, InputConfig::Zero));
        assert!(cfg.checks.is_empty());
        assert_eq!(cfg.stability_epsilon, 0.5);
        let checks = effective_checks(&cfg);
        assert_eq!(
            checks,
            vec![
                CheckKind::Passivity,
                CheckKind::Sector,
                CheckKind::EnergyDecay,
                CheckKind::Stability
            ]
        );
    }

    #[test]
    fn unknown_fields_are_named_in_the_error() {
        let err = serde_json::from_str::<ScenarioConfig>(
            r#"{
                "model": { "kind": "transport", "grid_points": 6 },
                "nonlinearity": { "kind": "saturation" },
                "horizon": 1.0,
                "stpe": 0.1
            }"#,
        )
        .expect_err("unknown field must be rejected");
        assert!(err.to_string().contains("stpe"), "got: {err}");
    }

    #[test]
    fn forced_default_checks_drop_the_decay_family() {
        let mut cfg = heat_config(BOTTOM_EDGE, "");
        cfg.checks.clear();
        cfg.input = InputConfig::Step {
            amplitude: 0.3,
            start: 0.0,
            channel: None,
        };
        assert_eq!(
            effective_checks(&cfg),
            vec![CheckKind::Passivity, CheckKind::Sector]
        );
    }

    #[test]
    fn heat_scenario_passes_all_default_checks() {
        let cfg = heat_config(BOTTOM_EDGE, "");
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 0, "reports: {:?}", outcome.reports);
        assert_eq!(outcome.reports.len(), 4);
        assert!(outcome.closed_loop_abscissa.unwrap() < 0.0);
        assert_eq!(outcome.trajectory.n_steps(), 80);
    }

    #[test]
    fn negated_map_fails_sector_and_contraction_checks() {
        let mut cfg = heat_config(BOTTOM_EDGE, r#""sector", "contraction""#);
        cfg.nonlinearity = MapConfig::Negated;
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 2, "reports: {:?}", outcome.reports);
        assert!(
            outcome.reports.iter().all(|r| r.failed()),
            "reports: {:?}",
            outcome.reports
        );
    }

    #[test]
    fn corrupted_trajectory_fails_passivity() {
        let mut cfg = heat_config(BOTTOM_EDGE, r#""passivity""#);
        cfg.corrupt_state_at_step = Some(5);
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 2);
        assert!(outcome.reports[0].failed());

        let out_of_range = {
            let mut c = cfg.clone();
            c.corrupt_state_at_step = Some(999);
            c
        };
        assert!(execute_scenario(&out_of_range, Path::new("."), None).is_err());
    }

    #[test]
    fn overdeclared_sector_constant_fails_the_falsifier() {
        let mut cfg = heat_config(BOTTOM_EDGE, r#""sector""#);
        cfg.nonlinearity = MapConfig::Saturation { kappa: Some(10.0) };
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 2);

        cfg.nonlinearity = MapConfig::Saturation { kappa: Some(1.0) };
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 0);
    }

    #[test]
    fn unactuated_heat_skips_stability() {
        let cfg = heat_config(r#""profile": { "kind": "zero" }"#, r#""stability""#);
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 3);
        assert!(outcome.reports[0].skipped());
    }

    #[test]
    fn forced_run_skips_the_unforced_family() {
        let mut cfg = heat_config(BOTTOM_EDGE, r#""contraction", "energy-decay", "stability""#);
        cfg.input = InputConfig::Sine {
            amplitude: 0.2,
            frequency: 0.5,
            phase: 0.0,
            channel: Some(0),
        };
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 3);
        assert!(outcome.reports.iter().all(|r| r.skipped()));
    }

    #[test]
    fn beam_scenario_passes_incremental_and_contraction() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{
                "model": { "kind": "timoshenko", "grid_points": 6 },
                "nonlinearity": { "kind": "saturation" },
                "initial": { "kind": "random-ball", "radius": 2.0 },
                "horizon": 0.4,
                "step": 0.02,
                "checks": ["passivity", "incremental", "contraction"],
                "seed": 11
            }"#,
        )
        .unwrap();
        let outcome = execute_scenario(&cfg, Path::new("."), None).expect("runs");
        assert_eq!(outcome.exit_code, 0, "reports: {:?}", outcome.reports);
    }

    #[test]
    fn coefficient_profiles_reach_the_discretized_model() {
        let cfg: ModelOnlyConfig = serde_json::from_str(
            r#"{
                "model": {
                    "kind": "timoshenko",
                    "grid_points": 8,
                    "mass_density": { "kind": "linear", "left": 1.0, "right": 2.0 },
                    "shear_stiffness": { "kind": "exponential", "base": 1.0, "rate": 0.3 }
                }
            }"#,
        )
        .unwrap();
        let model = build_model(&cfg.model, Path::new(".")).expect("builds");
        match model {
            BuiltModel::Phs { model, .. } => {
                let margin = model.field_node().impedance_passivity_margin();
                assert!(margin <= 1e-10, "margin {margin}");
            }
            _ => panic!("expected a distributed model"),
        }
    }

    #[test]
    fn custom_node_and_file_io_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, entries: &[f64]| {
            let m = DMatrix::from_iterator(
                1,
                entries.len(),
                entries.iter().map(|&v| Complex64::new(v, 0.0)),
            );
            matio::write_matrix(&dir.path().join(name), &m).unwrap();
        };
        write("a.txt", &[-1.0]);
        write("b.txt", &[1.0]);
        write("c.txt", &[1.0]);
        write("d.txt", &[0.0]);
        write("x0.txt", &[2.0]);
        // 20 steps of a constant input row.
        let rows = DMatrix::from_element(20, 1, Complex64::new(0.3, 0.0));
        matio::write_matrix(&dir.path().join("u.txt"), &rows).unwrap();

        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{
                "model": { "kind": "custom-node",
                           "a": "a.txt", "b": "b.txt", "c": "c.txt", "d": "d.txt" },
                "nonlinearity": { "kind": "saturation" },
                "initial": { "kind": "file", "path": "x0.txt" },
                "input": { "kind": "file", "path": "u.txt" },
                "horizon": 1.0,
                "step": 0.05,
                "checks": ["passivity", "sector"]
            }"#,
        )
        .unwrap();
        let outcome = execute_scenario(&cfg, dir.path(), None).expect("runs");
        assert_eq!(outcome.exit_code, 0, "reports: {:?}", outcome.reports);
        assert_eq!(outcome.trajectory.inputs[0][0].re, 0.3);

        let short = DMatrix::from_element(3, 1, Complex64::new(0.3, 0.0));
        matio::write_matrix(&dir.path().join("u.txt"), &short).unwrap();
        assert!(matches!(
            execute_scenario(&cfg, dir.path(), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn run_params_are_validated() {
        let mut cfg = heat_config(BOTTOM_EDGE, "");
        cfg.step = 0.0;
        assert!(matches!(
            execute_scenario(&cfg, Path::new("."), None),
            Err(Error::Config(_))
        ));
        let mut cfg = heat_config(BOTTOM_EDGE, "");
        cfg.horizon = -1.0;
        assert!(matches!(
            execute_scenario(&cfg, Path::new("."), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn run_scenario_writes_deterministic_files() {
        let cfg = heat_config(BOTTOM_EDGE, "");
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_scenario(&cfg, Path::new("."), dir_a.path(), None).expect("first run");
        run_scenario(&cfg, Path::new("."), dir_b.path(), None).expect("second run");
        for name in ["trajectory.csv", "report.txt", "plot.gp"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        let csv = std::fs::read_to_string(dir_a.path().join("trajectory.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,state_norm,energy,y0,u0,phi0,residual");
        assert_eq!(csv.lines().count(), 82, "header plus 81 state rows");
    }

    #[test]
    fn sweep_collects_rows_in_value_order() {
        let mut scenario = heat_config(BOTTOM_EDGE, r#""passivity", "energy-decay""#);
        scenario.horizon = 0.2;
        let sweep = SweepConfig {
            scenario,
            parameter: SweepParameter::Step,
            values: vec![0.05, 0.025, 0.0125],
        };
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_sweep(&sweep, Path::new("."), dir.path()).expect("sweeps");
        assert_eq!(outcome.exit_code, 0);
        assert_eq!(outcome.rows.len(), 3);
        let values: Vec<f64> = outcome.rows.iter().map(|r| r.value).collect();
        assert_eq!(values, vec![0.05, 0.025, 0.0125]);
        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,final_norm,passivity_margin,energy-decay_margin,abscissa"
        );
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn sweep_rejects_mismatched_parameters() {
        let scenario = heat_config(BOTTOM_EDGE, "");
        assert!(apply_sweep_value(&scenario, SweepParameter::Gain, 0.5).is_err());
        assert!(apply_sweep_value(&scenario, SweepParameter::Amplitude, 0.5).is_err());
        assert!(apply_sweep_value(&scenario, SweepParameter::GridPoints, 8.0).is_err());
        assert!(apply_sweep_value(&scenario, SweepParameter::Step, 0.01).is_ok());

        let sweep = SweepConfig {
            scenario,
            parameter: SweepParameter::Step,
            values: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(run_sweep(&sweep, Path::new("."), dir.path()).is_err());
    }

    #[test]
    fn worker_count_honors_the_environment() {
        assert_eq!(worker_count(10, Some("3")).unwrap(), 3);
        assert_eq!(worker_count(2, Some("16")).unwrap(), 2);
        assert!(worker_count(4, Some("0")).is_err());
        assert!(worker_count(4, Some("lots")).is_err());
        assert!(worker_count(4, None).unwrap() >= 1);
    }

    #[test]
    fn audit_reports_the_beam_structure() {
        let cfg: ModelOnlyConfig = serde_json::from_str(
            r#"{ "model": { "kind": "timoshenko", "grid_points": 8 } }"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_audit(&cfg, Path::new("."), dir.path()).expect("audits");
        assert!(outcome.passed, "audit text:\n{}", outcome.text);
        assert!(outcome.text.contains("verdict: PASS"));
        assert!(dir.path().join("audit.txt").exists());
    }

    #[test]
    fn audit_accepts_a_full_scenario_document() {
        let cfg: ModelOnlyConfig = serde_json::from_str(
            r#"{
                "model": { "kind": "heat2d", "nx": 3, "ny": 2,
                           "profile": { "kind": "uniform-edge", "edge": "left" } },
                "nonlinearity": { "kind": "saturation" },
                "horizon": 1.0,
                "step": 0.1
            }"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_audit(&cfg, Path::new("."), dir.path()).expect("audits");
        assert!(outcome.passed);
        assert!(outcome.text.contains("boundary profile integral"));
    }

    #[test]
    fn spectrum_reports_both_loops() {
        let cfg: ModelOnlyConfig = serde_json::from_str(
            r#"{
                "model": { "kind": "heat2d", "nx": 4, "ny": 3,
                           "profile": { "kind": "uniform-edge", "edge": "bottom" } }
            }"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_spectrum(&cfg, Path::new("."), dir.path()).expect("spectra");
        // Pure diffusion conserves the mean until feedback grounds it.
        assert!(outcome.open_abscissa.abs() <= 1e-10);
        assert!(outcome.closed_abscissa < 0.0);
        let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        assert!(csv.starts_with("loop,re,im\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 12);
    }

    #[test]
    fn exit_codes_aggregate_by_severity() {
        let pass = VerificationReport::from_margin("a", 1.0, CHECK_TOL);
        let fail = VerificationReport::from_margin("b", -1.0, CHECK_TOL);
        let skip = VerificationReport::skip("c", "hypothesis not met");
        assert_eq!(exit_code(&[pass.clone()]), 0);
        assert_eq!(exit_code(&[pass.clone(), skip.clone()]), 3);
        assert_eq!(exit_code(&[pass, skip, fail]), 2);
        assert_eq!(
            error_exit_code(&Error::Config("bad".into())),
            1
        );
        assert_eq!(
            error_exit_code(&Error::Singular {
                what: "output equation".into()
            }),
            2
        );
    }
}
