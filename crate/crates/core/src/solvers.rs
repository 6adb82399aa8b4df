//! Time steppers.
//!
//! The transport stepper advances the coupled even/odd Galerkin systems with
//! backward Euler. The odd update is eliminated first: its left matrix is
//! `(media_mass + (dt/eps^2) mass) (x) I`, block-diagonal across velocity
//! modes and positive definite per block, so the even unknowns satisfy a
//! dense Schur system that is factored once per `(dt, eps)` and reused every
//! step. The naive monolithic system is never formed; its conditioning blows
//! up as `eps` shrinks.
//!
//! Scalar steppers cover the heat equation (mass/stiffness pair), the
//! limiting density scheme (mass/limit-operator pair) and its homogenized and
//! asymmetric variants.

use faer::linalg::solvers::{Llt, PartialPivLu, Solve};
use faer::Mat;

use crate::assembly::SpatialSystem;
use crate::error::{Error, Result};
use crate::mesh::NestedMesh;
use crate::velocity::{basis_values, VelocitySystem};

/// Which even-equation projection the transport stepper uses.
///
/// The symmetric form divides the even equation by the media before the
/// Galerkin projection; the asymmetric form keeps it, which is cheaper but
/// converges to a non-symmetric discretization of the wrong limiting
/// operator. The asymmetric form exists for the comparison experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone, Copy)]
pub struct StepperConfig {
    /// Knudsen number.
    pub eps: f64,
    /// Time step.
    pub dt: f64,
    pub formulation: Formulation,
    /// Normwise backward-error tolerance for the implicit solves.
    pub residual_tol: f64,
}

impl StepperConfig {
    pub fn new(eps: f64, dt: f64) -> Self {
        StepperConfig {
            eps,
            dt,
            formulation: Formulation::Symmetric,
            residual_tol: 1e-10,
        }
    }

    pub fn with_formulation(mut self, formulation: Formulation) -> Self {
        self.formulation = formulation;
        self
    }
}

/// Galerkin coefficients of the kinetic solution: rows are coarse nodes,
/// columns velocity modes.
#[derive(Debug, Clone)]
pub struct KineticState {
    pub even: Mat<f64>,
    pub odd: Mat<f64>,
    pub t: f64,
}

impl KineticState {
    pub fn is_finite(&self) -> bool {
        let ok = |m: &Mat<f64>| {
            (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m[(i, j)].is_finite()))
        };
        ok(&self.even) && ok(&self.odd)
    }

    /// Coarse nodal density: the first even column (the constant velocity
    /// mode carries the angular average; all other modes have zero mean).
    pub fn density(&self) -> Vec<f64> {
        (0..self.even.nrows()).map(|m| self.even[(m, 0)]).collect()
    }
}

/// Coefficients of a scalar (density-only) field.
#[derive(Debug, Clone)]
pub struct ScalarState {
    pub coeffs: Vec<f64>,
    pub t: f64,
}

impl ScalarState {
    pub fn new(coeffs: Vec<f64>) -> Self {
        ScalarState { coeffs, t: 0.0 }
    }
}

/// Project initial data `f0(x, xi)` onto the tensor basis: nodal
/// interpolation in space (the basis is nodal) and quadrature projection of
/// the even/odd parts in velocity.
pub fn project_initial<F>(
    mesh: &NestedMesh,
    velocity: &VelocitySystem,
    f0: F,
) -> KineticState
where
    F: Fn(&[f64], f64) -> f64,
{
    let m = mesh.coarse_node_count();
    let n = velocity.n_basis;
    let mut even = Mat::<f64>::zeros(m, n);
    let mut odd = Mat::<f64>::zeros(m, n);
    for node in 0..m {
        let x = mesh.coarse_node_coord(node);
        for (&xi, &w) in velocity.rule.nodes.iter().zip(&velocity.rule.weights) {
            let fp = f0(&x, xi);
            let fm = f0(&x, -xi);
            let fe = 0.5 * (fp + fm);
            let fo = 0.5 * (fp - fm);
            let p = basis_values(n, velocity.mode, xi);
            for j in 0..n {
                even[(node, j)] += w * fe * p[j];
                odd[(node, j)] += w * fo * p[j];
            }
        }
    }
    KineticState { even, odd, t: 0.0 }
}

/// Initial data that depends on space only: the even part is the density in
/// the constant mode, the odd part vanishes.
pub fn project_density<F>(mesh: &NestedMesh, velocity: &VelocitySystem, rho0: F) -> KineticState
where
    F: Fn(&[f64]) -> f64,
{
    let m = mesh.coarse_node_count();
    let mut even = Mat::<f64>::zeros(m, velocity.n_basis);
    for node in 0..m {
        even[(node, 0)] = rho0(&mesh.coarse_node_coord(node));
    }
    KineticState {
        even,
        odd: Mat::zeros(m, velocity.n_basis),
        t: 0.0,
    }
}

/// Total mass `1^T mass coeffs`, conserved by all the steppers here.
pub fn total_mass(mass: &Mat<f64>, coeffs: &[f64]) -> f64 {
    let m = mass.nrows();
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            sum += mass[(i, j)] * coeffs[j];
        }
    }
    sum
}

struct FluxPair<'a> {
    velocity_flux: &'a Mat<f64>,
    /// Flux matrix multiplying the odd unknowns in the even equation.
    even_side: &'a Mat<f64>,
    /// Flux matrix multiplying the even unknowns in the odd equation.
    odd_side: &'a Mat<f64>,
}

/// Implicit even-odd transport stepper with cached factorizations.
pub struct TransportStepper<'a> {
    spatial: &'a SpatialSystem,
    velocity: &'a VelocitySystem,
    cfg: StepperConfig,
    m: usize,
    n: usize,
    /// Factorization of `W = media_mass + (dt/eps^2) mass`.
    w_chol: Llt<f64>,
    /// Row-equilibrated Schur matrix and its factorization.
    schur: Mat<f64>,
    row_scale: Vec<f64>,
    schur_lu: PartialPivLu<f64>,
}

impl<'a> TransportStepper<'a> {
    pub fn new(
        spatial: &'a SpatialSystem,
        velocity: &'a VelocitySystem,
        cfg: StepperConfig,
    ) -> Result<Self> {
        if cfg.eps <= 0.0 || cfg.dt <= 0.0 {
            return Err(Error::Config(format!(
                "need positive eps and dt, got eps = {}, dt = {}",
                cfg.eps, cfg.dt
            )));
        }
        if velocity.mode.dimension() != spatial.dim {
            return Err(Error::Config(format!(
                "velocity mode is {}-dimensional but the spatial system is {}-dimensional",
                velocity.mode.dimension(),
                spatial.dim
            )));
        }
        let media_mass = spatial
            .media_mass
            .as_ref()
            .ok_or_else(|| Error::Config("transport stepper needs media-weighted matrices".into()))?;
        let inv_media_mass = spatial.inv_media_mass.as_ref().unwrap();

        let m = spatial.mass.nrows();
        let n = velocity.n_basis;
        let ratio = cfg.dt / (cfg.eps * cfg.eps);
        let flux_ratio = cfg.dt / cfg.eps;

        let mut w = media_mass.clone();
        for i in 0..m {
            for j in 0..m {
                w[(i, j)] += ratio * spatial.mass[(i, j)];
            }
        }
        let w_chol = w.llt(faer::Side::Lower).map_err(|_| Error::Solver {
            message: "odd-block matrix is not positive definite".into(),
            residual: f64::NAN,
        })?;

        // Even-equation mass and collision weights per formulation.
        let (even_mass, collision_weight) = match cfg.formulation {
            Formulation::Symmetric => (&spatial.mass, inv_media_mass),
            Formulation::Asymmetric => (media_mass, &spatial.mass),
        };

        let mut schur = Mat::<f64>::zeros(m * n, m * n);
        // even_mass (x) I and (dt/eps^2) collision_weight (x) (I - P); the
        // projector complement leaves only the velocity modes n >= 2.
        for mm in 0..m {
            for mp in 0..m {
                let v = even_mass[(mm, mp)];
                if v != 0.0 {
                    for nn in 0..n {
                        schur[(mm * n + nn, mp * n + nn)] += v;
                    }
                }
                let c = ratio * collision_weight[(mm, mp)];
                if c != 0.0 {
                    for nn in 1..n {
                        schur[(mm * n + nn, mp * n + nn)] += c;
                    }
                }
            }
        }
        // Eliminating the odd unknowns moves
        // (dt/eps)^2 sum_ab (E_a W^-1 O_b) (x) (F_a F_b) to the left side
        // with a negative sign: the coefficient of alpha[mp, np] in row
        // (mm, nn) is -scale * G[mm, mp] * (F_a F_b)[np, nn] because the
        // velocity factor multiplies the coefficient matrix from the right.
        let pairs = Self::flux_pairs(spatial, velocity, cfg.formulation);
        let w_inv_odd: Vec<Mat<f64>> = pairs.iter().map(|p| w_chol.solve(p.odd_side)).collect();
        let scale = -flux_ratio * flux_ratio;
        for pa in &pairs {
            for (pb, w_o) in pairs.iter().zip(&w_inv_odd) {
                let g = pa.even_side * w_o;
                // The odd-equation flux hits the coefficients first, then the
                // even-equation flux: alpha F_b F_a.
                let v = pb.velocity_flux * pa.velocity_flux;
                for mm in 0..m {
                    for mp in 0..m {
                        let gv = scale * g[(mm, mp)];
                        if gv == 0.0 {
                            continue;
                        }
                        for nn in 0..n {
                            for np in 0..n {
                                schur[(mm * n + nn, mp * n + np)] += gv * v[(np, nn)];
                            }
                        }
                    }
                }
            }
        }

        // Row equilibration keeps the stiff collision rows from poisoning the
        // factorization at small eps.
        let mut row_scale = vec![1.0f64; m * n];
        for i in 0..m * n {
            let mut mx: f64 = 0.0;
            for j in 0..m * n {
                mx = mx.max(schur[(i, j)].abs());
            }
            row_scale[i] = if mx > 0.0 { mx } else { 1.0 };
            for j in 0..m * n {
                schur[(i, j)] /= row_scale[i];
            }
        }
        let schur_lu = schur.partial_piv_lu();

        Ok(TransportStepper {
            spatial,
            velocity,
            cfg,
            m,
            n,
            w_chol,
            schur,
            row_scale,
            schur_lu,
        })
    }

    fn flux_pairs(
        spatial: &'a SpatialSystem,
        velocity: &'a VelocitySystem,
        formulation: Formulation,
    ) -> Vec<FluxPair<'a>> {
        let even_x = match formulation {
            Formulation::Symmetric => &spatial.grad_x,
            Formulation::Asymmetric => &spatial.media_grad_x,
        };
        let mut pairs = vec![FluxPair {
            velocity_flux: &velocity.flux_x,
            even_side: even_x,
            odd_side: &spatial.media_grad_x,
        }];
        if let Some(flux_y) = &velocity.flux_y {
            let even_y = match formulation {
                Formulation::Symmetric => spatial.grad_y.as_ref().unwrap(),
                Formulation::Asymmetric => spatial.media_grad_y.as_ref().unwrap(),
            };
            pairs.push(FluxPair {
                velocity_flux: flux_y,
                even_side: even_y,
                odd_side: spatial.media_grad_y.as_ref().unwrap(),
            });
        }
        pairs
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Advance one backward-Euler step.
    pub fn step(&self, state: &KineticState) -> Result<KineticState> {
        let (m, n) = (self.m, self.n);
        if state.even.nrows() != m || state.even.ncols() != n {
            return Err(Error::Config(format!(
                "state is {}x{}, stepper expects {}x{}",
                state.even.nrows(),
                state.even.ncols(),
                m,
                n
            )));
        }
        let media_mass = self.spatial.media_mass.as_ref().unwrap();
        let even_mass = match self.cfg.formulation {
            Formulation::Symmetric => &self.spatial.mass,
            Formulation::Asymmetric => media_mass,
        };
        let flux_ratio = self.cfg.dt / self.cfg.eps;
        let pairs = Self::flux_pairs(self.spatial, self.velocity, self.cfg.formulation);

        // Odd-equation data: Y = W^-1 media_mass odd^n.
        let y = self.w_chol.solve(&(media_mass * &state.odd));

        // Even right-hand side.
        let mut rhs = even_mass * &state.even;
        for p in &pairs {
            let term = p.even_side * &(&y * p.velocity_flux);
            for i in 0..m {
                for j in 0..n {
                    rhs[(i, j)] -= flux_ratio * term[(i, j)];
                }
            }
        }

        // Solve the equilibrated Schur system with one refinement pass.
        let mut b = Mat::<f64>::zeros(m * n, 1);
        for i in 0..m {
            for j in 0..n {
                b[(i * n + j, 0)] = rhs[(i, j)] / self.row_scale[i * n + j];
            }
        }
        let mut x = self.schur_lu.solve(&b);
        let mut residual = self.backward_error(&x, &b);
        if residual > self.cfg.residual_tol {
            let r = &b - &(&self.schur * &x);
            x += self.schur_lu.solve(&r);
            residual = self.backward_error(&x, &b);
        }
        if residual > self.cfg.residual_tol || !residual.is_finite() {
            return Err(Error::Solver {
                message: "transport step did not reach the residual tolerance".into(),
                residual,
            });
        }

        let even = Mat::<f64>::from_fn(m, n, |i, j| x[(i * n + j, 0)]);

        // Recover the odd unknowns by back-substitution.
        let mut odd_rhs = media_mass * &state.odd;
        for p in &pairs {
            let term = p.odd_side * &(&even * p.velocity_flux);
            for i in 0..m {
                for j in 0..n {
                    odd_rhs[(i, j)] -= flux_ratio * term[(i, j)];
                }
            }
        }
        let odd = self.w_chol.solve(&odd_rhs);

        let next = KineticState {
            even,
            odd,
            t: state.t + self.cfg.dt,
        };
        if !next.is_finite() {
            return Err(Error::Solver {
                message: "transport step produced non-finite values".into(),
                residual,
            });
        }
        Ok(next)
    }

    /// Normwise backward error of the equilibrated Schur solve.
    fn backward_error(&self, x: &Mat<f64>, b: &Mat<f64>) -> f64 {
        let r = b - &(&self.schur * x);
        let norm = |m: &Mat<f64>| -> f64 {
            let mut s = 0.0f64;
            for i in 0..m.nrows() {
                s = s.max(m[(i, 0)].abs());
            }
            s
        };
        // Rows of the equilibrated matrix have unit max-norm.
        let denom = norm(x) + norm(b);
        if denom == 0.0 {
            0.0
        } else {
            norm(&r) / denom
        }
    }
}

/// Backward-Euler stepper for `mass d/dt coeffs = factor * op coeffs`:
/// `(mass - factor dt op) coeffs^{n+1} = mass coeffs^n`.
pub struct ImplicitScalarStepper {
    mass: Mat<f64>,
    lu: PartialPivLu<f64>,
    dt: f64,
}

impl ImplicitScalarStepper {
    pub fn new(mass: &Mat<f64>, op: &Mat<f64>, dt: f64, factor: f64) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if mass.nrows() != op.nrows() || mass.ncols() != op.ncols() {
            return Err(Error::Config(format!(
                "mass is {}x{} but operator is {}x{}",
                mass.nrows(),
                mass.ncols(),
                op.nrows(),
                op.ncols()
            )));
        }
        let m = mass.nrows();
        let lhs = Mat::<f64>::from_fn(m, m, |i, j| mass[(i, j)] - factor * dt * op[(i, j)]);
        let lu = lhs.partial_piv_lu();
        Ok(ImplicitScalarStepper {
            mass: mass.clone(),
            lu,
            dt,
        })
    }

    pub fn step(&self, state: &ScalarState) -> Result<ScalarState> {
        let m = self.mass.nrows();
        if state.coeffs.len() != m {
            return Err(Error::Config(format!(
                "state has {} coefficients, stepper expects {m}",
                state.coeffs.len()
            )));
        }
        let b = &self.mass * &Mat::<f64>::from_fn(m, 1, |i, _| state.coeffs[i]);
        let x = self.lu.solve(&b);
        let coeffs: Vec<f64> = (0..m).map(|i| x[(i, 0)]).collect();
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver {
                message: "scalar step produced non-finite values".into(),
                residual: f64::NAN,
            });
        }
        Ok(ScalarState {
            coeffs,
            t: state.t + self.dt,
        })
    }
}

/// Heat stepper `(mass - factor dt stiffness) eta^{n+1} = mass eta^n`; the
/// factor is the diffusion constant of the velocity geometry (1/2 on the
/// circle, 1/3 in slab geometry).
pub fn heat_stepper(
    mass: &Mat<f64>,
    stiffness: &Mat<f64>,
    dt: f64,
    factor: f64,
) -> Result<ImplicitScalarStepper> {
    ImplicitScalarStepper::new(mass, stiffness, dt, factor)
}

/// Limiting-scheme stepper for the leading even mode; `limit_op` is the
/// operator from [`crate::assembly::limit_operator`] (or its homogenized
/// counterpart).
pub fn limit_stepper(
    mass: &Mat<f64>,
    limit_op: &Mat<f64>,
    dt: f64,
    factor: f64,
) -> Result<ImplicitScalarStepper> {
    ImplicitScalarStepper::new(mass, limit_op, dt, factor)
}

/// The non-symmetric limiting operator the asymmetric formulation produces:
/// `media_grad_x mass^-1 media_grad_x (+ y term)`, advanced against the
/// media-weighted mass.
pub fn asymmetric_limit_parts(sys: &SpatialSystem) -> Result<(Mat<f64>, Mat<f64>)> {
    let media_mass = sys
        .media_mass
        .as_ref()
        .ok_or_else(|| Error::Config("asymmetric limit needs media-weighted matrices".into()))?;
    let chol = sys
        .mass
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Assembly("mass matrix is not positive definite".into()))?;
    let mut op = &sys.media_grad_x * &chol.solve(&sys.media_grad_x);
    if let Some(my) = &sys.media_grad_y {
        op += my * &chol.solve(my);
    }
    Ok((media_mass.clone(), op))
}
