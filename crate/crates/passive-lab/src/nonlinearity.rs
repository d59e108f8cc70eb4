//! Monotone output-feedback maps and randomized sector falsifiers.
//!
//! A map phi: C^m -> C^m is incrementally sectored with constant kappa when
//!
//! ```text
//! Re <phi(u) - phi(v), u - v>  >=  kappa * ||phi(u) - phi(v)||^2
//! ```
//!
//! for all u, v. The catalog here covers the maps used by the feedback
//! laboratory: norm-ball saturation (kappa = 1), radial profiles built from a
//! nondecreasing Lipschitz scalar function (kappa = 1/L), linear gains,
//! componentwise stacks, the zero map, and opaque user closures with a
//! declared constant.
//!
//! The `check_*` methods are falsifiers, not provers: they sample the claimed
//! inequality at seeded random points and report the worst margin found.

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, re_inner};
use crate::report::VerificationReport;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;

/// Incremental sector constant. `Unbounded` means the inequality holds for
/// every finite constant (only the zero map and maps declared as such).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kappa {
    Finite(f64),
    Unbounded,
}

impl Kappa {
    /// The weaker of two constants: a stack of maps is sectored with the
    /// minimum of its parts.
    pub fn min(self, other: Kappa) -> Kappa {
        match (self, other) {
            (Kappa::Unbounded, k) | (k, Kappa::Unbounded) => k,
            (Kappa::Finite(a), Kappa::Finite(b)) => Kappa::Finite(a.min(b)),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Kappa::Finite(k) => k,
            Kappa::Unbounded => f64::INFINITY,
        }
    }
}

type VecMap = Arc<dyn Fn(&DVector<Complex64>) -> DVector<Complex64> + Send + Sync>;
type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

enum MapKind {
    Saturation,
    Radial {
        psi: Profile,
        lipschitz: f64,
        name: String,
    },
    LinearGain {
        k: f64,
    },
    Zero,
    Componentwise {
        parts: Vec<MonotoneMap>,
    },
    Custom {
        f: VecMap,
        kappa: Kappa,
        lipschitz: Option<f64>,
        real_on_real: bool,
        name: String,
    },
}

impl Clone for MapKind {
    fn clone(&self) -> Self {
        match self {
            MapKind::Saturation => MapKind::Saturation,
            MapKind::Radial { psi, lipschitz, name } => MapKind::Radial {
                psi: Arc::clone(psi),
                lipschitz: *lipschitz,
                name: name.clone(),
            },
            MapKind::LinearGain { k } => MapKind::LinearGain { k: *k },
            MapKind::Zero => MapKind::Zero,
            MapKind::Componentwise { parts } => MapKind::Componentwise { parts: parts.clone() },
            MapKind::Custom {
                f,
                kappa,
                lipschitz,
                real_on_real,
                name,
            } => MapKind::Custom {
                f: Arc::clone(f),
                kappa: *kappa,
                lipschitz: *lipschitz,
                real_on_real: *real_on_real,
                name: name.clone(),
            },
        }
    }
}

/// A monotone map on C^m together with the structural data the trajectory
/// solver and the verification layer need: the sector constant, a Lipschitz
/// bound when one is known, and whether real inputs produce real outputs.
#[derive(Clone)]
pub struct MonotoneMap {
    kind: MapKind,
    dim: usize,
}

impl fmt::Debug for MonotoneMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            MapKind::Saturation => "saturation".to_string(),
            MapKind::Radial { name, .. } => format!("radial[{name}]"),
            MapKind::LinearGain { k } => format!("linear_gain({k})"),
            MapKind::Zero => "zero".to_string(),
            MapKind::Componentwise { parts } => format!("componentwise({} parts)", parts.len()),
            MapKind::Custom { name, .. } => format!("custom[{name}]"),
        };
        write!(f, "MonotoneMap({name}, dim={})", self.dim)
    }
}

impl MonotoneMap {
    /// Norm-ball saturation on C^m: identity inside the unit ball, radial
    /// projection onto the sphere outside. Sector constant 1.
    pub fn saturation(dim: usize) -> Result<Self> {
        require_dim(dim)?;
        Ok(Self {
            kind: MapKind::Saturation,
            dim,
        })
    }

    /// Radial map u -> psi(||u||) u / ||u|| from a scalar profile.
    ///
    /// The profile must satisfy psi(0) = 0, be nondecreasing, nonnegative and
    /// Lipschitz with the given constant; such a map is incrementally
    /// sectored with 1/lipschitz. The constructor spot-checks these
    /// properties on a grid and rejects profiles that visibly violate them.
    pub fn radial<F>(dim: usize, psi: F, lipschitz: f64, name: impl Into<String>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        require_dim(dim)?;
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::Invalid(format!(
                "radial profile needs a finite nonnegative Lipschitz constant, got {lipschitz}"
            )));
        }
        if psi(0.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "radial profile must vanish at 0, got psi(0) = {}",
                psi(0.0)
            )));
        }
        // Spot checks on [0, 8]: nonnegativity, monotonicity, slope bound.
        let step = 1.0 / 16.0;
        let mut prev = psi(0.0);
        for i in 1..=128 {
            let r = i as f64 * step;
            let val = psi(r);
            if val < -1e-12 {
                return Err(Error::Invalid(format!(
                    "radial profile must be nonnegative, psi({r}) = {val}"
                )));
            }
            if val + 1e-12 < prev {
                return Err(Error::Invalid(format!(
                    "radial profile must be nondecreasing, psi({r}) = {val} < psi({}) = {prev}",
                    r - step
                )));
            }
            if val - prev > lipschitz * step + 1e-9 * (1.0 + lipschitz) {
                return Err(Error::Invalid(format!(
                    "radial profile exceeds its declared Lipschitz constant {lipschitz} near r = {r}"
                )));
            }
            prev = val;
        }
        Ok(Self {
            kind: MapKind::Radial {
                psi: Arc::new(psi),
                lipschitz,
                name: name.into(),
            },
            dim,
        })
    }

    /// Radial dead zone: zero inside the ball of the given radius, then
    /// radial with unit slope. Sector constant 1. Violates every stability
    /// sector with alpha > 0, which makes it a useful negative control.
    pub fn deadzone(dim: usize, threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::Invalid(format!(
                "dead zone threshold must be finite and nonnegative, got {threshold}"
            )));
        }
        Self::radial(
            dim,
            move |r| (r - threshold).max(0.0),
            1.0,
            format!("deadzone({threshold})"),
        )
    }

    /// phi(u) = k u with k >= 0. Sector constant 1/k (unbounded at k = 0).
    pub fn linear_gain(dim: usize, k: f64) -> Result<Self> {
        require_dim(dim)?;
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Invalid(format!(
                "linear gain must be finite and nonnegative, got {k}"
            )));
        }
        Ok(Self {
            kind: MapKind::LinearGain { k },
            dim,
        })
    }

    /// The zero map. Sectored with every constant.
    pub fn zero(dim: usize) -> Result<Self> {
        require_dim(dim)?;
        Ok(Self {
            kind: MapKind::Zero,
            dim,
        })
    }

    /// Stack of independent maps acting on consecutive blocks of the input.
    /// The sector constant is the minimum over the parts.
    pub fn componentwise(parts: Vec<MonotoneMap>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Invalid("componentwise stack needs at least one part".into()));
        }
        let dim = parts.iter().map(|p| p.io_dim()).sum();
        Ok(Self {
            kind: MapKind::Componentwise { parts },
            dim,
        })
    }

    /// Opaque closure with a declared sector constant. The declaration is
    /// trusted by construction and falsified (if false) by
    /// [`check_incremental_sector`](Self::check_incremental_sector).
    pub fn custom<F>(dim: usize, f: F, kappa: Kappa, name: impl Into<String>) -> Result<Self>
    where
        F: Fn(&DVector<Complex64>) -> DVector<Complex64> + Send + Sync + 'static,
    {
        require_dim(dim)?;
        Ok(Self {
            kind: MapKind::Custom {
                f: Arc::new(f),
                kappa,
                lipschitz: None,
                real_on_real: false,
                name: name.into(),
            },
            dim,
        })
    }

    /// Declare a Lipschitz bound for a custom map (enables stronger solver
    /// step-size choices).
    pub fn with_lipschitz(mut self, bound: f64) -> Self {
        if let MapKind::Custom { lipschitz, .. } = &mut self.kind {
            *lipschitz = Some(bound);
        }
        self
    }

    /// Declare that a custom map sends real vectors to real vectors.
    pub fn with_real_on_real(mut self) -> Self {
        if let MapKind::Custom { real_on_real, .. } = &mut self.kind {
            *real_on_real = true;
        }
        self
    }

    pub fn io_dim(&self) -> usize {
        self.dim
    }

    /// The incremental sector constant this map is built to satisfy.
    pub fn kappa(&self) -> Kappa {
        match &self.kind {
            MapKind::Saturation => Kappa::Finite(1.0),
            MapKind::Radial { lipschitz, .. } => {
                if *lipschitz > 0.0 {
                    Kappa::Finite(1.0 / lipschitz)
                } else {
                    Kappa::Unbounded
                }
            }
            MapKind::LinearGain { k } => {
                if *k > 0.0 {
                    Kappa::Finite(1.0 / k)
                } else {
                    Kappa::Unbounded
                }
            }
            MapKind::Zero => Kappa::Unbounded,
            MapKind::Componentwise { parts } => parts
                .iter()
                .map(|p| p.kappa())
                .fold(Kappa::Unbounded, Kappa::min),
            MapKind::Custom { kappa, .. } => *kappa,
        }
    }

    /// A global Lipschitz bound when one is known.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match &self.kind {
            MapKind::Saturation => Some(1.0),
            MapKind::Radial { lipschitz, .. } => Some(*lipschitz),
            MapKind::LinearGain { k } => Some(*k),
            MapKind::Zero => Some(0.0),
            MapKind::Componentwise { parts } => {
                let mut worst = 0.0f64;
                for p in parts {
                    worst = worst.max(p.lipschitz_bound()?);
                }
                Some(worst)
            }
            MapKind::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// Whether real inputs are guaranteed to produce real outputs.
    pub fn real_on_real(&self) -> bool {
        match &self.kind {
            MapKind::Saturation | MapKind::Radial { .. } | MapKind::LinearGain { .. } | MapKind::Zero => true,
            MapKind::Componentwise { parts } => parts.iter().all(|p| p.real_on_real()),
            MapKind::Custom { real_on_real, .. } => *real_on_real,
        }
    }

    pub fn eval(&self, u: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if u.len() != self.dim {
            return Err(Error::Dimension {
                what: "monotone map input",
                expected: self.dim,
                got: u.len(),
            });
        }
        match &self.kind {
            MapKind::Saturation => {
                let r = u.norm();
                if r <= 1.0 {
                    Ok(u.clone())
                } else {
                    Ok(u / Complex64::new(r, 0.0))
                }
            }
            MapKind::Radial { psi, .. } => {
                let r = u.norm();
                if r == 0.0 {
                    Ok(DVector::zeros(self.dim))
                } else {
                    let scale = psi(r) / r;
                    Ok(u * Complex64::new(scale, 0.0))
                }
            }
            MapKind::LinearGain { k } => Ok(u * Complex64::new(*k, 0.0)),
            MapKind::Zero => Ok(DVector::zeros(self.dim)),
            MapKind::Componentwise { parts } => {
                let mut out = DVector::zeros(self.dim);
                let mut offset = 0;
                for p in parts {
                    let len = p.io_dim();
                    let block = DVector::from_column_slice(&u.as_slice()[offset..offset + len]);
                    let val = p.eval(&block)?;
                    out.rows_mut(offset, len).copy_from(&val);
                    offset += len;
                }
                Ok(out)
            }
            MapKind::Custom { f, .. } => {
                let out = f(u);
                if out.len() != self.dim {
                    return Err(Error::Dimension {
                        what: "custom map output",
                        expected: self.dim,
                        got: out.len(),
                    });
                }
                Ok(out)
            }
        }
    }

    /// Scalar real evaluation, available when the map is one-dimensional and
    /// real-on-real. Used by the bisection fallback of the output solver.
    pub fn eval_scalar_real(&self, x: f64) -> Result<f64> {
        if self.dim != 1 || !self.real_on_real() {
            return Err(Error::Invalid(
                "scalar real evaluation needs a one-dimensional real-on-real map".into(),
            ));
        }
        let v = self.eval(&DVector::from_element(1, Complex64::new(x, 0.0)))?;
        Ok(v[0].re)
    }

    /// Randomized falsifier for the incremental sector inequality with the
    /// given constant. Samples pairs uniformly from the ball of the given
    /// radius and reports the worst margin
    /// `Re <d_phi, d_u> - kappa ||d_phi||^2` over all pairs.
    pub fn check_incremental_sector(
        &self,
        kappa: f64,
        n_samples: usize,
        radius: f64,
        seed: u64,
    ) -> Result<VerificationReport> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Invalid(format!(
                "sampling radius must be positive and finite, got {radius}"
            )));
        }
        if n_samples == 0 {
            return Err(Error::Invalid("sector check needs at least one sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tol = 1e-12 * (1.0 + radius * radius);
        let mut worst = f64::INFINITY;
        let mut worst_idx = 0usize;
        let mut worst_pair: Option<(DVector<Complex64>, DVector<Complex64>)> = None;
        for i in 0..n_samples {
            let u1 = sample_ball(&mut rng, self.dim, radius);
            let u2 = sample_ball(&mut rng, self.dim, radius);
            let p1 = self.eval(&u1)?;
            let p2 = self.eval(&u2)?;
            let dphi = &p2 - &p1;
            let du = &u2 - &u1;
            let dphi_sq = norm_sq(&dphi);
            let sector = if dphi_sq == 0.0 { 0.0 } else { kappa * dphi_sq };
            let margin = re_inner(&dphi, &du) - sector;
            if margin < worst {
                worst = margin;
                worst_idx = i;
                worst_pair = Some((u1, u2));
            }
        }
        let mut report = VerificationReport::from_margin("incremental-sector", worst, tol)
            .with_index(worst_idx);
        if let Some((u1, u2)) = worst_pair {
            report = report.with_details(format!(
                "kappa={kappa} samples={n_samples} radius={radius} worst pair u1={} u2={}",
                fmt_vec(&u1),
                fmt_vec(&u2)
            ));
        }
        Ok(report)
    }

    /// Randomized falsifier for the stability sector: inside the ball of
    /// radius delta the map must satisfy `Re <phi(u), u> >= alpha ||u||^2`,
    /// outside it `Re <phi(u), u> >= gamma`. Half the samples go to each
    /// region; the outer region is the shell from delta out to
    /// `max(radius, 2 delta)`.
    pub fn check_stability_sector(
        &self,
        alpha: f64,
        gamma: f64,
        delta: f64,
        n_samples: usize,
        radius: f64,
        seed: u64,
    ) -> Result<VerificationReport> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Invalid(format!(
                "stability sector needs delta > 0, got {delta}"
            )));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Invalid(format!(
                "sampling radius must be positive and finite, got {radius}"
            )));
        }
        if n_samples < 2 {
            return Err(Error::Invalid(
                "stability sector check needs at least two samples".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r_out = radius.max(2.0 * delta);
        let n_in = n_samples / 2;
        let n_out = n_samples - n_in;
        let mut worst = f64::INFINITY;
        let mut worst_idx = 0usize;
        let mut worst_in = f64::INFINITY;
        let mut worst_out = f64::INFINITY;
        for i in 0..n_in {
            let u = sample_ball(&mut rng, self.dim, delta);
            let phi = self.eval(&u)?;
            let margin = re_inner(&phi, &u) - alpha * norm_sq(&u);
            worst_in = worst_in.min(margin);
            if margin < worst {
                worst = margin;
                worst_idx = i;
            }
        }
        for i in 0..n_out {
            let u = sample_shell(&mut rng, self.dim, delta, r_out);
            let phi = self.eval(&u)?;
            let margin = re_inner(&phi, &u) - gamma;
            worst_out = worst_out.min(margin);
            if margin < worst {
                worst = margin;
                worst_idx = n_in + i;
            }
        }
        let tol = 1e-12 * (1.0 + r_out * r_out);
        Ok(
            VerificationReport::from_margin("stability-sector", worst, tol)
                .with_index(worst_idx)
                .with_details(format!(
                    "alpha={alpha} gamma={gamma} delta={delta} worst inside={worst_in:.6e} worst outside={worst_out:.6e}"
                )),
        )
    }
}

fn require_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Invalid("map dimension must be at least 1".into()));
    }
    Ok(())
}

fn fmt_vec(v: &DVector<Complex64>) -> String {
    if v.len() > 8 {
        return format!("<dim {} vector, norm {:.3e}>", v.len(), v.norm());
    }
    let entries: Vec<String> = v.iter().map(|z| crate::matio::format_complex(*z)).collect();
    format!("[{}]", entries.join(", "))
}

/// Standard normal via Box-Muller; uses two uniforms per pair of outputs.
fn fill_gaussian(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        out[i] = r * th.cos();
        if i + 1 < out.len() {
            out[i + 1] = r * th.sin();
        }
        i += 2;
    }
}

/// Uniform sample from the ball of the given radius in C^m (dimension 2m
/// over the reals): Gaussian direction, radius scaled by U^(1/2m).
pub fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<Complex64> {
    let mut coords = vec![0.0f64; 2 * dim];
    loop {
        fill_gaussian(rng, &mut coords);
        let norm: f64 = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let u: f64 = rng.random();
            let r = radius * u.powf(1.0 / (2.0 * dim as f64));
            let scale = r / norm;
            return DVector::from_iterator(
                dim,
                (0..dim).map(|i| Complex64::new(coords[i] * scale, coords[dim + i] * scale)),
            );
        }
    }
}

/// Uniform sample from the shell r_in <= ||u|| <= r_out in C^m.
pub fn sample_shell(rng: &mut ChaCha8Rng, dim: usize, r_in: f64, r_out: f64) -> DVector<Complex64> {
    debug_assert!(r_out >= r_in);
    let mut coords = vec![0.0f64; 2 * dim];
    loop {
        fill_gaussian(rng, &mut coords);
        let norm: f64 = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let p = 2.0 * dim as f64;
            let u: f64 = rng.random();
            let r = (r_in.powf(p) + u * (r_out.powf(p) - r_in.powf(p))).powf(1.0 / p);
            let scale = r / norm;
            return DVector::from_iterator(
                dim,
                (0..dim).map(|i| Complex64::new(coords[i] * scale, coords[dim + i] * scale)),
            );
        }
    }
}
