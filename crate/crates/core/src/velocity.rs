//! Spectral velocity discretization.
//!
//! The basis is the family of normalized Legendre polynomials on the velocity
//! interval under the uniform probability measure, so the Gram matrix is the
//! identity and the isotropic collision operator is diagonal. Flux matrices
//! are computed with Gauss quadrature; the collision and equilibrium
//! projector matrices are written analytically from the eigenstructure.

use faer::Mat;

use crate::error::{Error, Result};

/// Velocity-domain geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityMode {
    /// Slab geometry: `xi` in `[-1, 1]`, velocity `v = xi`.
    Slab1d,
    /// Unit-speed directions in the plane: angle `xi` in `(-pi, pi]`,
    /// velocity `v = (cos xi, sin xi)`.
    Circle2d,
}

impl VelocityMode {
    /// Half-width of the `xi` interval; reference coordinate is `xi / scale`.
    pub fn scale(self) -> f64 {
        match self {
            VelocityMode::Slab1d => 1.0,
            VelocityMode::Circle2d => std::f64::consts::PI,
        }
    }

    /// Spatial dimension this mode transports in.
    pub fn dimension(self) -> usize {
        match self {
            VelocityMode::Slab1d => 1,
            VelocityMode::Circle2d => 2,
        }
    }

    /// Mean square of the x-velocity component under the uniform measure:
    /// `<xi^2> = 1/3` in slab geometry, `<cos^2 xi> = 1/2` on the circle.
    /// This is the diffusion constant of the parabolic limit.
    pub fn diffusion_constant(self) -> f64 {
        match self {
            VelocityMode::Slab1d => 1.0 / 3.0,
            VelocityMode::Circle2d => 0.5,
        }
    }
}

/// Gauss rule for the uniform probability measure on the velocity interval.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial values `P_0..P_{n-1}` at `u` by the three-term
/// recurrence.
fn legendre_raw(n: usize, u: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n);
    if n == 0 {
        return p;
    }
    p.push(1.0);
    if n == 1 {
        return p;
    }
    p.push(u);
    for j in 1..n - 1 {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * u * p[j] - jf * p[j - 1]) / (jf + 1.0);
        p.push(next);
    }
    p
}

/// Normalized basis values `p_1..p_N` at `xi`: `p_n` has degree `n - 1`,
/// `p_1 = 1`, and `<p_m p_n> = delta_mn` under the uniform probability
/// measure on the interval.
pub fn basis_values(n: usize, mode: VelocityMode, xi: f64) -> Vec<f64> {
    let u = xi / mode.scale();
    let raw = legendre_raw(n, u);
    raw.iter()
        .enumerate()
        .map(|(j, p)| ((2 * j + 1) as f64).sqrt() * p)
        .collect()
}

/// Orthonormal basis constructor; errors when `n == 0`.
pub fn build_basis(n: usize, mode: VelocityMode) -> Result<impl Fn(f64) -> Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("velocity basis order must be at least 1".into()));
    }
    Ok(move |xi: f64| basis_values(n, mode, xi))
}

/// K-point Gauss rule: nodes interior to the interval, positive weights
/// summing to one, exact on polynomials of degree `<= 2K - 1`.
pub fn gauss_rule(k: usize, mode: VelocityMode) -> Result<GaussRule> {
    if k == 0 {
        return Err(Error::Config("quadrature must have at least one node".into()));
    }
    let mut nodes = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for i in 1..=k {
        // Newton iteration on P_k from the Chebyshev-like initial guess.
        let mut u = (std::f64::consts::PI * (i as f64 - 0.25) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre_raw(k + 1, u);
            let pk = p[k];
            // Derivative identity: (1 - u^2) P_k' = k (P_{k-1} - u P_k).
            let dpk = k as f64 * (p[k - 1] - u * pk) / (1.0 - u * u);
            let step = pk / dpk;
            u -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let p = legendre_raw(k + 1, u);
        let dpk = k as f64 * (p[k - 1] - u * p[k]) / (1.0 - u * u);
        // Standard weight 2 / ((1-u^2) P_k'^2), normalized to the
        // probability measure by the factor 1/2.
        weights.push(1.0 / ((1.0 - u * u) * dpk * dpk));
        nodes.push(u * mode.scale());
    }
    // Re-sort ascending for deterministic downstream iteration.
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
    let rule = GaussRule {
        nodes: idx.iter().map(|&i| nodes[i]).collect(),
        weights: idx.iter().map(|&i| weights[i]).collect(),
    };
    Ok(rule)
}

/// The velocity-domain matrices used by the Galerkin systems.
#[derive(Debug, Clone)]
pub struct VelocitySystem {
    pub mode: VelocityMode,
    pub n_basis: usize,
    pub rule: GaussRule,
    /// Gram matrix of the basis (identity up to quadrature roundoff).
    pub gram: Mat<f64>,
    /// Negated collision operator in the basis: `diag(0, 1, ..., 1)`, exact.
    pub collision: Mat<f64>,
    /// Projector onto the equilibrium (constant) mode: `e1 e1^T`, exact.
    pub mean_proj: Mat<f64>,
    /// `<v_x p_m p_n>`: tridiagonal in slab geometry, `<cos xi p_m p_n>` on
    /// the circle.
    pub flux_x: Mat<f64>,
    /// `<sin xi p_m p_n>` on the circle; absent in slab geometry.
    pub flux_y: Option<Mat<f64>>,
}

impl VelocitySystem {
    /// Assemble with `k` quadrature points; requires `k >= n + 2` so the
    /// polynomial part of every integrand is resolved.
    pub fn assemble(n: usize, k: usize, mode: VelocityMode) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("velocity basis order must be at least 1".into()));
        }
        if k < n + 2 {
            return Err(Error::Config(format!(
                "quadrature order {k} too small for basis order {n} (need k >= n + 2)"
            )));
        }
        let rule = gauss_rule(k, mode)?;
        let table: Vec<Vec<f64>> = rule
            .nodes
            .iter()
            .map(|&xi| basis_values(n, mode, xi))
            .collect();

        let quad_matrix = |f: &dyn Fn(f64) -> f64| -> Mat<f64> {
            let mut m = Mat::zeros(n, n);
            for (q, p) in table.iter().enumerate() {
                let w = rule.weights[q] * f(rule.nodes[q]);
                for i in 0..n {
                    let wi = w * p[i];
                    for j in 0..n {
                        m[(i, j)] += wi * p[j];
                    }
                }
            }
            m
        };

        let gram = quad_matrix(&|_| 1.0);
        let mut collision = Mat::zeros(n, n);
        for i in 1..n {
            collision[(i, i)] = 1.0;
        }
        let mut mean_proj = Mat::zeros(n, n);
        mean_proj[(0, 0)] = 1.0;

        let (flux_x, flux_y) = match mode {
            VelocityMode::Slab1d => (quad_matrix(&|xi| xi), None),
            VelocityMode::Circle2d => (
                quad_matrix(&|xi| xi.cos()),
                Some(quad_matrix(&|xi| xi.sin())),
            ),
        };

        Ok(VelocitySystem {
            mode,
            n_basis: n,
            rule,
            gram,
            collision,
            mean_proj,
            flux_x,
            flux_y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    /// Independent quadrature oracle: composite Simpson for the uniform
    /// probability measure on the mode's interval.
    fn simpson_mean(mode: VelocityMode, f: impl Fn(f64) -> f64) -> f64 {
        let a = -mode.scale();
        let b = mode.scale();
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0 / (b - a)
    }

    #[test]
    fn first_mode_is_constant_one() {
        for mode in [VelocityMode::Slab1d, VelocityMode::Circle2d] {
            for xi in [-0.9 * mode.scale(), 0.0, 0.3, mode.scale()] {
                assert_eq!(basis_values(4, mode, xi)[0], 1.0);
            }
        }
    }

    #[test]
    fn second_mode_closed_forms() {
        // Circle: p2 = sqrt(3) xi / pi; slab: p2 = sqrt(3) xi.
        for xi in [-2.0, -0.4, 0.7, 3.0] {
            let c = basis_values(2, VelocityMode::Circle2d, xi);
            assert_relative_eq!(c[1], 3f64.sqrt() * xi / PI, epsilon = 1e-14);
        }
        for xi in [-1.0, -0.3, 0.5, 1.0] {
            let s = basis_values(2, VelocityMode::Slab1d, xi);
            assert_relative_eq!(s[1], 3f64.sqrt() * xi, epsilon = 1e-14);
        }
        // Normalization checked against the independent oracle.
        let norm = simpson_mean(VelocityMode::Circle2d, |xi| {
            let p = basis_values(2, VelocityMode::Circle2d, xi);
            p[1] * p[1]
        });
        assert_relative_eq!(norm, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_order_is_config_error() {
        assert!(build_basis(0, VelocityMode::Slab1d).is_err());
        assert!(VelocitySystem::assemble(0, 8, VelocityMode::Slab1d).is_err());
    }

    #[test]
    fn single_point_rule_is_midpoint() {
        let rule = gauss_rule(1, VelocityMode::Slab1d).unwrap();
        assert_abs_diff_eq!(rule.nodes[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        for k in [2, 5, 8, 17, 32] {
            let rule = gauss_rule(k, VelocityMode::Circle2d).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-13);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!(rule
                .nodes
                .iter()
                .all(|&x| x.abs() < VelocityMode::Circle2d.scale()));
        }
    }

    #[test]
    fn second_moment_on_circle() {
        let rule = gauss_rule(4, VelocityMode::Circle2d).unwrap();
        let m2: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x * x)
            .sum();
        assert_relative_eq!(m2, PI * PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn collision_and_projector_are_analytic() {
        let sys = VelocitySystem::assemble(6, 14, VelocityMode::Circle2d).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let b = if i == j && i > 0 { 1.0 } else { 0.0 };
                let p = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert_eq!(sys.collision[(i, j)], b);
                assert_eq!(sys.mean_proj[(i, j)], p);
            }
        }
    }

    #[test]
    fn gram_is_identity() {
        for (n, mode) in [(8, VelocityMode::Slab1d), (16, VelocityMode::Circle2d)] {
            let sys = VelocitySystem::assemble(n, 2 * n, mode).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(sys.gram[(i, j)], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn parity_sparsity_of_flux_matrices() {
        let sys = VelocitySystem::assemble(10, 20, VelocityMode::Circle2d).unwrap();
        let fs = sys.flux_y.as_ref().unwrap();
        for i in 0..10 {
            for j in 0..10 {
                // Basis degrees are i and j (0-based), and cos/sin have
                // even/odd parity, so entries vanish by degree parity.
                if (i + j) % 2 == 1 {
                    assert_abs_diff_eq!(sys.flux_x[(i, j)], 0.0, epsilon = 1e-12);
                } else {
                    assert_abs_diff_eq!(fs[(i, j)], 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn flux_entries_match_closed_forms() {
        let sys = VelocitySystem::assemble(6, 16, VelocityMode::Circle2d).unwrap();
        let fs = sys.flux_y.as_ref().unwrap();
        // <cos xi> = 0 and <sin xi * sqrt(3) xi / pi> = sqrt(3)/pi.
        assert_abs_diff_eq!(sys.flux_x[(0, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(fs[(0, 1)], 3f64.sqrt() / PI, epsilon = 1e-12);
        // Cross-check against the independent oracle.
        let oracle = simpson_mean(VelocityMode::Circle2d, |xi| {
            xi.sin() * basis_values(2, VelocityMode::Circle2d, xi)[1]
        });
        assert_relative_eq!(fs[(0, 1)], oracle, epsilon = 1e-9);
    }

    #[test]
    fn slab_flux_is_tridiagonal_zero_diagonal() {
        let n = 8;
        let sys = VelocitySystem::assemble(n, 2 * n, VelocityMode::Slab1d).unwrap();
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) != 1 {
                    assert_abs_diff_eq!(sys.flux_x[(i, j)], 0.0, epsilon = 1e-13);
                }
            }
        }
        // (F F)_11 = <xi^2> = 1/3 holds exactly once N >= 2.
        let ff = &sys.flux_x * &sys.flux_x;
        assert_relative_eq!(ff[(0, 0)], 1.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn squared_flux_converges_to_half_on_circle() {
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16] {
            let sys = VelocitySystem::assemble(n, 2 * n, VelocityMode::Circle2d).unwrap();
            let fc2 = (&sys.flux_x * &sys.flux_x)[(0, 0)];
            let fs = sys.flux_y.as_ref().unwrap();
            let fs2 = (fs * fs)[(0, 0)];
            let err = (fc2 - 0.5).abs().max((fs2 - 0.5).abs());
            assert!(err < prev, "spectral error should decrease");
            prev = err;
        }
        assert!(prev <= 1e-8, "error at N = 16 is {prev:.3e}");
    }

    #[test]
    fn flux_matrices_are_symmetric() {
        let sys = VelocitySystem::assemble(9, 20, VelocityMode::Circle2d).unwrap();
        let fs = sys.flux_y.as_ref().unwrap();
        for i in 0..9 {
            for j in 0..9 {
                assert_abs_diff_eq!(sys.flux_x[(i, j)], sys.flux_x[(j, i)], epsilon = 1e-12);
                assert_abs_diff_eq!(fs[(i, j)], fs[(j, i)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_too_small_is_config_error() {
        assert!(VelocitySystem::assemble(8, 9, VelocityMode::Slab1d).is_err());
    }

    proptest::proptest! {
        /// The K-point rule integrates monomials up to degree 2K-1 exactly;
        /// exact moments of the uniform probability measure are
        /// scale^j / (j + 1) for even j and zero for odd j.
        #[test]
        fn gauss_exactness(k in 2usize..12, j in 0usize..8) {
            for mode in [VelocityMode::Slab1d, VelocityMode::Circle2d] {
                let deg = j.min(2 * k - 1);
                let rule = gauss_rule(k, mode).unwrap();
                let got: f64 = rule.nodes.iter().zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                let expect = if deg % 2 == 0 {
                    mode.scale().powi(deg as i32) / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                let tol = 1e-12 * mode.scale().powi(deg as i32).max(1.0);
                proptest::prop_assert!((got - expect).abs() <= tol);
            }
        }
    }
}
