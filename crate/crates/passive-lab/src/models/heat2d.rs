//! Heat diffusion on a rectangle with prescribed boundary heat flux.
//!
//! Finite volumes on a uniform cell-centered grid: interior fluxes use the
//! two-point difference across each face, boundary cells receive the
//! prescribed inward flux u(t) b(s) where b is a fixed profile over the
//! boundary arclength. The collocated output is the b-weighted boundary
//! integral of the temperature trace, so the discrete energy balance
//!
//! ```text
//! d/dt (1/2) integral z^2 = -alpha a(z, z) + u y
//! ```
//!
//! holds exactly with a(., .) the discrete Dirichlet form, making the node
//! impedance passive by construction.
//!
//! Cells are indexed row-major from the bottom-left corner. Boundary faces
//! are enumerated counterclockwise by arclength starting at the bottom-left
//! corner: bottom edge left to right, right edge bottom to top, top edge
//! right to left, left edge top to bottom.

use crate::error::{Error, Result, MAX_STATE_DIM};
use crate::node::SystemNode;
use crate::trajectory::Trajectory;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

/// Shape of the prescribed boundary flux along the normalized arclength.
#[derive(Clone, Debug)]
pub enum BoundaryProfile {
    /// No actuation anywhere (the closed loop then has a conserved mean).
    Zero,
    /// Unit flux on one edge, zero elsewhere.
    UniformEdge(Edge),
    /// Gaussian profile exp(-((s - center) / width)^2 / 2) in normalized
    /// arclength s in [0, 1).
    GaussianBump { center: f64, width: f64 },
}

#[derive(Clone, Debug)]
pub struct HeatSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub diffusivity: f64,
    pub profile: BoundaryProfile,
}

/// One boundary face: owning cell, face length, normalized arclength of the
/// face midpoint, and the edge it lies on.
#[derive(Clone, Debug)]
pub struct BoundaryFace {
    pub cell: usize,
    pub length: f64,
    pub position: f64,
    pub edge: Edge,
}

impl HeatSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lx.is_finite() && self.lx > 0.0 && self.ly.is_finite() && self.ly > 0.0) {
            return Err(Error::Invalid(format!(
                "rectangle sides must be positive, got {} by {}",
                self.lx, self.ly
            )));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Invalid("grid needs at least one cell per direction".into()));
        }
        if self.nx * self.ny > MAX_STATE_DIM {
            return Err(Error::TooLarge(self.nx * self.ny));
        }
        if !(self.diffusivity.is_finite() && self.diffusivity > 0.0) {
            return Err(Error::Invalid(format!(
                "diffusivity must be positive, got {}",
                self.diffusivity
            )));
        }
        if let BoundaryProfile::GaussianBump { width, center } = self.profile {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::Invalid(format!(
                    "bump width must be positive, got {width}"
                )));
            }
            if !(0.0..1.0).contains(&center) {
                return Err(Error::Invalid(format!(
                    "bump center must lie in [0, 1), got {center}"
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<HeatModel> {
        self.validate()?;
        let (nx, ny) = (self.nx, self.ny);
        let cells = nx * ny;
        let dx = self.lx / nx as f64;
        let dy = self.ly / ny as f64;
        let area = dx * dy;
        let alpha = self.diffusivity;

        // Interior two-point fluxes; rows sum to zero (pure Neumann).
        let mut laplacian = DMatrix::<f64>::zeros(cells, cells);
        let cond_x = alpha * dy / dx / area;
        let cond_y = alpha * dx / dy / area;
        for iy in 0..ny {
            for ix in 0..nx {
                let j = iy * nx + ix;
                if ix + 1 < nx {
                    let k = j + 1;
                    laplacian[(j, j)] -= cond_x;
                    laplacian[(j, k)] += cond_x;
                    laplacian[(k, k)] -= cond_x;
                    laplacian[(k, j)] += cond_x;
                }
                if iy + 1 < ny {
                    let k = j + nx;
                    laplacian[(j, j)] -= cond_y;
                    laplacian[(j, k)] += cond_y;
                    laplacian[(k, k)] -= cond_y;
                    laplacian[(k, j)] += cond_y;
                }
            }
        }

        // Boundary faces counterclockwise from the bottom-left corner.
        let perimeter = 2.0 * (self.lx + self.ly);
        let mut faces = Vec::with_capacity(2 * (nx + ny));
        for ix in 0..nx {
            faces.push(BoundaryFace {
                cell: ix,
                length: dx,
                position: ((ix as f64 + 0.5) * dx) / perimeter,
                edge: Edge::Bottom,
            });
        }
        for iy in 0..ny {
            faces.push(BoundaryFace {
                cell: iy * nx + (nx - 1),
                length: dy,
                position: (self.lx + (iy as f64 + 0.5) * dy) / perimeter,
                edge: Edge::Right,
            });
        }
        for step in 0..nx {
            let ix = nx - 1 - step;
            faces.push(BoundaryFace {
                cell: (ny - 1) * nx + ix,
                length: dx,
                position: (self.lx + self.ly + (step as f64 + 0.5) * dx) / perimeter,
                edge: Edge::Top,
            });
        }
        for step in 0..ny {
            let iy = ny - 1 - step;
            faces.push(BoundaryFace {
                cell: iy * nx,
                length: dy,
                position: (2.0 * self.lx + self.ly + (step as f64 + 0.5) * dy) / perimeter,
                edge: Edge::Left,
            });
        }

        let profile_values = DVector::from_iterator(
            faces.len(),
            faces.iter().map(|face| match &self.profile {
                BoundaryProfile::Zero => 0.0,
                BoundaryProfile::UniformEdge(e) => {
                    if face.edge == *e {
                        1.0
                    } else {
                        0.0
                    }
                }
                BoundaryProfile::GaussianBump { center, width } => {
                    let t = (face.position - center) / width;
                    (-0.5 * t * t).exp()
                }
            }),
        );

        // Input column in energy coordinates s = sqrt(area) z; the output is
        // its transpose, which makes the passivity block vanish exactly.
        let mut input_column = DVector::<f64>::zeros(cells);
        for (face, b) in faces.iter().zip(profile_values.iter()) {
            input_column[face.cell] += face.length * b / area.sqrt();
        }

        let b_mat = DMatrix::from_column_slice(cells, 1, input_column.as_slice());
        let c_mat = b_mat.transpose();
        let d_mat = DMatrix::<f64>::zeros(1, 1);
        let node = SystemNode::from_real(&laplacian, &b_mat, &c_mat, &d_mat)?;

        Ok(HeatModel {
            node,
            lx: self.lx,
            ly: self.ly,
            nx,
            ny,
            dx,
            dy,
            diffusivity: alpha,
            faces,
            profile_values,
            laplacian,
            input_column,
        })
    }
}

pub struct HeatModel {
    node: SystemNode,
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    diffusivity: f64,
    faces: Vec<BoundaryFace>,
    profile_values: DVector<f64>,
    laplacian: DMatrix<f64>,
    input_column: DVector<f64>,
}

impl HeatModel {
    pub fn node(&self) -> &SystemNode {
        &self.node
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Rectangle side lengths (lx, ly).
    pub fn extent(&self) -> (f64, f64) {
        (self.lx, self.ly)
    }

    /// Input column of the node in energy coordinates.
    pub fn input_column(&self) -> &DVector<f64> {
        &self.input_column
    }

    pub fn faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    pub fn profile_values(&self) -> &DVector<f64> {
        &self.profile_values
    }

    pub fn cell_center(&self, j: usize) -> (f64, f64) {
        let ix = j % self.nx;
        let iy = j / self.nx;
        ((ix as f64 + 0.5) * self.dx, (iy as f64 + 0.5) * self.dy)
    }

    /// Total actuated boundary length, the b-weighted perimeter integral.
    /// The closed loop under output feedback is exponentially stable exactly
    /// when this is nonzero (the constant mode is then observed).
    pub fn boundary_integral(&self) -> f64 {
        self.faces
            .iter()
            .zip(self.profile_values.iter())
            .map(|(f, b)| f.length * b)
            .sum()
    }

    /// Sample a function of (x, y) at the cell centers.
    pub fn sample_cells(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            self.cells(),
            (0..self.cells()).map(|j| {
                let (x, y) = self.cell_center(j);
                f(x, y)
            }),
        )
    }

    /// Cell temperatures to energy-coordinate state.
    pub fn physical_to_state(&self, z: &DVector<f64>) -> Result<DVector<Complex64>> {
        if z.len() != self.cells() {
            return Err(Error::Dimension {
                what: "cell temperature vector",
                expected: self.cells(),
                got: z.len(),
            });
        }
        let scale = self.cell_area().sqrt();
        Ok(z.map(|v| Complex64::new(v * scale, 0.0)))
    }

    /// Energy-coordinate state back to cell temperatures (real parts).
    pub fn state_to_physical(&self, s: &DVector<Complex64>) -> Result<DVector<f64>> {
        if s.len() != self.cells() {
            return Err(Error::Dimension {
                what: "energy-coordinate state",
                expected: self.cells(),
                got: s.len(),
            });
        }
        let scale = 1.0 / self.cell_area().sqrt();
        Ok(s.map(|v| v.re * scale))
    }

    /// Discrete Dirichlet form a(z, w): diffusivity times the sum over
    /// interior faces of (length / distance) times the jumps of z and w.
    /// Integration by parts holds exactly: area * <Lz, w> = -a(z, w) with L
    /// the interior flux operator.
    pub fn dirichlet_form(&self, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        let gx = self.dy / self.dx;
        let gy = self.dx / self.dy;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let j = iy * self.nx + ix;
                if ix + 1 < self.nx {
                    total += gx * (z[j + 1] - z[j]) * (w[j + 1] - w[j]);
                }
                if iy + 1 < self.ny {
                    total += gy * (z[j + self.nx] - z[j]) * (w[j + self.nx] - w[j]);
                }
            }
        }
        self.diffusivity * total
    }

    /// Interior flux operator applied to cell temperatures.
    pub fn apply_flux_operator(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.laplacian * z
    }

    /// Defect of a computed trajectory in the time-integrated weak form of
    /// the diffusion equation against a test function w(x, y):
    ///
    /// ```text
    /// integral (z_T - z_0) w
    ///   = - integral_0^T a(z, w) dt + integral_0^T u(t) (boundary b w) dt
    /// ```
    ///
    /// The input term is integrated exactly (the feedback is constant over
    /// each step), the Dirichlet term by the trapezoid rule, so the defect
    /// is near the solver tolerance for stationary profiles and first order
    /// in the step for moving ones. Returns the absolute defect.
    pub fn weak_residual(&self, traj: &Trajectory, w: impl Fn(f64, f64) -> f64) -> Result<f64> {
        if traj.state_dim() != self.cells() {
            return Err(Error::Dimension {
                what: "trajectory state",
                expected: self.cells(),
                got: traj.state_dim(),
            });
        }
        if traj.io_dim() != 1 {
            return Err(Error::Dimension {
                what: "trajectory input",
                expected: 1,
                got: traj.io_dim(),
            });
        }
        let w_bar = self.sample_cells(w);
        let boundary_weight: f64 = self
            .faces
            .iter()
            .zip(self.profile_values.iter())
            .map(|(f, b)| f.length * b * w_bar[f.cell])
            .sum();
        let area = self.cell_area();
        let h = traj.step;
        let z: Vec<DVector<f64>> = traj
            .states
            .iter()
            .map(|s| self.state_to_physical(s))
            .collect::<Result<_>>()?;
        let n = traj.n_steps();
        let lhs = area * (&z[n] - &z[0]).dot(&w_bar);
        let mut rhs = 0.0;
        for k in 0..n {
            let feedback = traj.feedbacks[k][0].re;
            rhs += h * feedback * boundary_weight;
            rhs -= h * 0.5 * (self.dirichlet_form(&z[k], &w_bar) + self.dirichlet_form(&z[k + 1], &w_bar));
        }
        Ok((lhs - rhs).abs())
    }
}
