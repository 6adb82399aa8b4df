//! Spatial matrix assembly by the composite trapezoidal rule over fine cells.
//!
//! Mass-type integrands are averaged over fine-cell corners; basis gradients
//! are the per-cell constants (1D) or the bilinear gradients evaluated at
//! cell centers (2D), with the coefficient sampled at the center when it
//! multiplies a gradient. Assembly order is deterministic: elements, then
//! fine cells row-major, then corner pairs.

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};
use crate::media::MediaSpec;
use crate::mesh::NestedMesh;
use crate::msfem::{BasisMode, BasisSet};

/// Coefficient entering the weighted matrices: the oscillatory media itself,
/// or a constant tensor (the homogenized coefficient).
#[derive(Debug, Clone, Copy)]
pub enum Coefficient<'a> {
    Media(&'a MediaSpec),
    Tensor([[f64; 2]; 2]),
}

impl Coefficient<'_> {
    fn is_media(&self) -> bool {
        matches!(self, Coefficient::Media(_))
    }

    pub fn fingerprint_string(&self) -> String {
        match self {
            Coefficient::Media(m) => m.fingerprint_string(),
            Coefficient::Tensor(t) => format!(
                "tensor:{:x}:{:x}:{:x}:{:x}",
                t[0][0].to_bits(),
                t[0][1].to_bits(),
                t[1][0].to_bits(),
                t[1][1].to_bits()
            ),
        }
    }
}

/// All coarse-space matrices of one basis/coefficient combination.
///
/// Gradient-flux and stiffness matrices are always present; the media-weighted
/// and inverse-media-weighted mass matrices exist only when the coefficient is
/// a pointwise media (a constant tensor has no meaningful reciprocal weight).
#[derive(Debug, Clone)]
pub struct SpatialSystem {
    pub dim: usize,
    pub basis_mode: BasisMode,
    /// Plain mass matrix.
    pub mass: Mat<f64>,
    /// `<phi_m, d/dx phi_n>`.
    pub grad_x: Mat<f64>,
    pub grad_y: Option<Mat<f64>>,
    /// `<phi_m, (a grad phi_n)_x>`.
    pub media_grad_x: Mat<f64>,
    pub media_grad_y: Option<Mat<f64>>,
    /// Heat stiffness `-<a grad phi_m, grad phi_n>`: symmetric negative
    /// semidefinite with the constant vector in its null space.
    pub stiffness: Mat<f64>,
    /// Media-weighted mass; `None` for tensor coefficients.
    pub media_mass: Option<Mat<f64>>,
    /// Inverse-media-weighted mass; `None` for tensor coefficients.
    pub inv_media_mass: Option<Mat<f64>>,
}

struct CellGeometry {
    /// Local lattice indices of the fine cell's corners.
    nodes: Vec<usize>,
    /// Geometric corner coordinates.
    corner_coords: Vec<[f64; 2]>,
    center: [f64; 2],
}

pub fn assemble_spatial(
    mesh: &NestedMesh,
    basis: &BasisSet,
    coeff: Coefficient<'_>,
) -> Result<SpatialSystem> {
    let dim = mesh.dim();
    if let Coefficient::Media(media) = coeff {
        if media.dimension() != dim {
            return Err(Error::Assembly(format!(
                "media dimension {} does not match mesh dimension {}",
                media.dimension(),
                dim
            )));
        }
    }
    let m = mesh.coarse_node_count();
    let d = mesh.corners_per_element();
    let r = mesh.refinement();
    let hx = mesh.fine_spacing(0);
    let hy = if dim == 2 { mesh.fine_spacing(1) } else { 1.0 };
    let cell_measure = mesh.fine_cell_measure();
    let corner_avg = 1.0 / d as f64;

    let mut mass = Mat::<f64>::zeros(m, m);
    let mut grad_x = Mat::<f64>::zeros(m, m);
    let mut grad_y = (dim == 2).then(|| Mat::<f64>::zeros(m, m));
    let mut media_grad_x = Mat::<f64>::zeros(m, m);
    let mut media_grad_y = (dim == 2).then(|| Mat::<f64>::zeros(m, m));
    let mut stiffness = Mat::<f64>::zeros(m, m);
    let mut media_mass = coeff.is_media().then(|| Mat::<f64>::zeros(m, m));
    let mut inv_media_mass = coeff.is_media().then(|| Mat::<f64>::zeros(m, m));

    let cells_per_element = if dim == 1 { r } else { r * r };
    for e in 0..mesh.element_count() {
        let corners = mesh.element_corners(e);
        let locals = basis.element_local(e);

        for cell in 0..cells_per_element {
            let (cp, cq) = (cell % r, cell / r);
            let geo = cell_geometry(mesh, e, cp, cq);

            // Coefficient samples.
            let mut a_corner = vec![1.0; geo.nodes.len()];
            if let Coefficient::Media(media) = coeff {
                for (k, c) in geo.corner_coords.iter().enumerate() {
                    a_corner[k] = media.checked_evaluate(c)?;
                }
            }
            let a_center = match coeff {
                Coefficient::Media(media) => {
                    let v = media.checked_evaluate(&geo.center)?;
                    [[v, 0.0], [0.0, v]]
                }
                Coefficient::Tensor(t) => t,
            };

            // Per-corner-function values at cell corners and gradients at the
            // center.
            let mut vals = vec![[0.0f64; 4]; d];
            let mut grads = vec![[0.0f64; 2]; d];
            let mut means = vec![0.0f64; d];
            for (c, local) in locals.iter().enumerate() {
                for (k, &node) in geo.nodes.iter().enumerate() {
                    vals[c][k] = local[node];
                }
                means[c] = vals[c][..geo.nodes.len()].iter().sum::<f64>() * corner_avg;
                grads[c] = if dim == 1 {
                    [(vals[c][1] - vals[c][0]) / hx, 0.0]
                } else {
                    [
                        ((vals[c][1] - vals[c][0]) + (vals[c][2] - vals[c][3])) / (2.0 * hx),
                        ((vals[c][3] - vals[c][0]) + (vals[c][2] - vals[c][1])) / (2.0 * hy),
                    ]
                };
            }

            for cm in 0..d {
                let gm = corners[cm];
                for cn in 0..d {
                    let gn = corners[cn];
                    // Trapezoidal corner averages for the mass family.
                    let mut mm = 0.0;
                    let mut mm_a = 0.0;
                    let mut mm_inv = 0.0;
                    for k in 0..geo.nodes.len() {
                        let prod = vals[cm][k] * vals[cn][k];
                        mm += prod;
                        mm_a += a_corner[k] * prod;
                        mm_inv += prod / a_corner[k];
                    }
                    let scale = cell_measure * corner_avg;
                    mass[(gm, gn)] += scale * mm;
                    if let Some(sm) = media_mass.as_mut() {
                        sm[(gm, gn)] += scale * mm_a;
                    }
                    if let Some(si) = inv_media_mass.as_mut() {
                        si[(gm, gn)] += scale * mm_inv;
                    }

                    // Gradient-bearing terms at the cell center.
                    let a_grad_n = [
                        a_center[0][0] * grads[cn][0] + a_center[0][1] * grads[cn][1],
                        a_center[1][0] * grads[cn][0] + a_center[1][1] * grads[cn][1],
                    ];
                    grad_x[(gm, gn)] += cell_measure * means[cm] * grads[cn][0];
                    media_grad_x[(gm, gn)] += cell_measure * means[cm] * a_grad_n[0];
                    if let Some(gy) = grad_y.as_mut() {
                        gy[(gm, gn)] += cell_measure * means[cm] * grads[cn][1];
                    }
                    if let Some(my) = media_grad_y.as_mut() {
                        my[(gm, gn)] += cell_measure * means[cm] * a_grad_n[1];
                    }
                    stiffness[(gm, gn)] -= cell_measure
                        * (grads[cm][0] * a_grad_n[0] + grads[cm][1] * a_grad_n[1]);
                }
            }
        }
    }

    Ok(SpatialSystem {
        dim,
        basis_mode: basis.mode(),
        mass,
        grad_x,
        grad_y,
        media_grad_x,
        media_grad_y,
        stiffness,
        media_mass,
        inv_media_mass,
    })
}

fn cell_geometry(mesh: &NestedMesh, element: usize, cp: usize, cq: usize) -> CellGeometry {
    let w = mesh.local_nodes_per_axis();
    let hx = mesh.fine_spacing(0);
    if mesh.dim() == 1 {
        let origin = mesh.element_local_coord(element, cp, 0);
        CellGeometry {
            nodes: vec![cp, cp + 1],
            corner_coords: vec![origin, [origin[0] + hx, 0.0]],
            center: [origin[0] + 0.5 * hx, 0.0],
        }
    } else {
        let hy = mesh.fine_spacing(1);
        let base = cq * w + cp;
        let origin = mesh.element_local_coord(element, cp, cq);
        CellGeometry {
            nodes: vec![base, base + 1, base + w + 1, base + w],
            corner_coords: vec![
                origin,
                [origin[0] + hx, origin[1]],
                [origin[0] + hx, origin[1] + hy],
                [origin[0], origin[1] + hy],
            ],
            center: [origin[0] + 0.5 * hx, origin[1] + 0.5 * hy],
        }
    }
}

/// Heat stiffness only (with the media or a homogenized tensor).
pub fn assemble_heat(
    mesh: &NestedMesh,
    basis: &BasisSet,
    coeff: Coefficient<'_>,
) -> Result<Mat<f64>> {
    Ok(assemble_spatial(mesh, basis, coeff)?.stiffness)
}

/// The limiting operator `D = grad_x mass^-1 media_grad_x (+ y term)`,
/// applied through a Cholesky factorization of the mass matrix. Dense: the
/// inverse mass destroys sparsity.
pub fn limit_operator(sys: &SpatialSystem) -> Result<Mat<f64>> {
    let chol = sys
        .mass
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Assembly("mass matrix is not positive definite".into()))?;
    let mut d = &sys.grad_x * &chol.solve(&sys.media_grad_x);
    if let (Some(gy), Some(my)) = (&sys.grad_y, &sys.media_grad_y) {
        d += gy * &chol.solve(my);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    fn unit_media_system_1d(cells: usize, r: usize) -> SpatialSystem {
        let mesh = NestedMesh::build(1, cells, r).unwrap();
        let media = MediaSpec::constant(1.0, 1).unwrap();
        let basis = BasisSet::affine(&mesh);
        assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap()
    }

    #[test]
    fn unit_media_collapses_weighted_matrices() {
        let mesh = NestedMesh::build(2, 3, 3).unwrap();
        let media = MediaSpec::constant(1.0, 2).unwrap();
        let basis = BasisSet::multiscale(&mesh, &media).unwrap();
        let sys = assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap();
        let sm = sys.media_mass.as_ref().unwrap();
        let m = mesh.coarse_node_count();
        for i in 0..m {
            for j in 0..m {
                assert_abs_diff_eq!(sm[(i, j)], sys.mass[(i, j)], epsilon = 1e-12);
                assert_abs_diff_eq!(
                    sys.media_grad_x[(i, j)],
                    sys.grad_x[(i, j)],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn hat_mass_matrix_approaches_exact_integrals() {
        // Exact integrals of hat products: diagonal 2H/3, off-diagonal H/6.
        // The trapezoidal values converge to these under fine-grid refinement.
        let cells = 8;
        let h_coarse = 2.0 / cells as f64;
        let sys = unit_media_system_1d(cells, 128);
        for i in 0..cells {
            assert_relative_eq!(sys.mass[(i, i)], 2.0 * h_coarse / 3.0, max_relative = 1e-4);
            assert_relative_eq!(
                sys.mass[(i, (i + 1) % cells)],
                h_coarse / 6.0,
                max_relative = 1e-3
            );
        }
        // Coarser fine grid is farther from exact: the trapezoidal error
        // shrinks with refinement.
        let rough = unit_media_system_1d(cells, 4);
        let err_fine = (sys.mass[(0, 0)] - 2.0 * h_coarse / 3.0).abs();
        let err_rough = (rough.mass[(0, 0)] - 2.0 * h_coarse / 3.0).abs();
        assert!(err_fine < err_rough / 100.0);
    }

    #[test]
    fn hat_gradient_flux_is_exact_antisymmetric() {
        let cells = 8;
        let sys = unit_media_system_1d(cells, 4);
        for i in 0..cells {
            for j in 0..cells {
                let expect = if j == (i + 1) % cells {
                    0.5
                } else if j == (i + cells - 1) % cells {
                    -0.5
                } else {
                    0.0
                };
                assert_abs_diff_eq!(sys.grad_x[(i, j)], expect, epsilon = 1e-13);
                assert_abs_diff_eq!(sys.grad_x[(i, j)], -sys.grad_x[(j, i)], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn hat_heat_stiffness_is_exact() {
        let cells = 8;
        let h_coarse = 2.0 / cells as f64;
        let sys = unit_media_system_1d(cells, 4);
        for i in 0..cells {
            for j in 0..cells {
                let expect = if i == j {
                    -2.0 / h_coarse
                } else if j == (i + 1) % cells || j == (i + cells - 1) % cells {
                    1.0 / h_coarse
                } else {
                    0.0
                };
                assert_abs_diff_eq!(sys.stiffness[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn stiffness_scales_linearly_in_media() {
        let mesh = NestedMesh::build(1, 4, 8).unwrap();
        let basis = BasisSet::affine(&mesh);
        let a1 = MediaSpec::constant(1.3, 1).unwrap();
        let a2 = MediaSpec::constant(2.6, 1).unwrap();
        let s1 = assemble_heat(&mesh, &basis, Coefficient::Media(&a1)).unwrap();
        let s2 = assemble_heat(&mesh, &basis, Coefficient::Media(&a2)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(s2[(i, j)], 2.0 * s1[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn structural_invariants_hold_for_oscillatory_media() {
        let mesh = NestedMesh::build(2, 4, 8).unwrap();
        let media = MediaSpec::builtin("benchmark2d", None).unwrap();
        let basis = BasisSet::multiscale(&mesh, &media).unwrap();
        let sys = assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap();
        let m = mesh.coarse_node_count();

        // Symmetry of the mass family and the stiffness.
        let sm = sys.media_mass.as_ref().unwrap();
        let si = sys.inv_media_mass.as_ref().unwrap();
        for i in 0..m {
            for j in 0..m {
                assert_abs_diff_eq!(sys.mass[(i, j)], sys.mass[(j, i)], epsilon = 1e-10);
                assert_abs_diff_eq!(sm[(i, j)], sm[(j, i)], epsilon = 1e-10);
                assert_abs_diff_eq!(si[(i, j)], si[(j, i)], epsilon = 1e-10);
                assert_abs_diff_eq!(
                    sys.stiffness[(i, j)],
                    sys.stiffness[(j, i)],
                    epsilon = 1e-10
                );
            }
        }
        // Positive definiteness by factorization.
        assert!(sys.mass.llt(faer::Side::Lower).is_ok());
        assert!(sm.llt(faer::Side::Lower).is_ok());
        assert!(si.llt(faer::Side::Lower).is_ok());

        // Row sums of the flux matrices vanish (partition of unity).
        for i in 0..m {
            let mut sums = [0.0f64; 4];
            for j in 0..m {
                sums[0] += sys.grad_x[(i, j)];
                sums[1] += sys.grad_y.as_ref().unwrap()[(i, j)];
                sums[2] += sys.media_grad_x[(i, j)];
                sums[3] += sys.media_grad_y.as_ref().unwrap()[(i, j)];
            }
            for s in sums {
                assert_abs_diff_eq!(s, 0.0, epsilon = 1e-10);
            }
        }

        // Stiffness annihilates constants and is negative semidefinite on a
        // probe set.
        for i in 0..m {
            let row: f64 = (0..m).map(|j| sys.stiffness[(i, j)]).sum();
            assert_abs_diff_eq!(row, 0.0, epsilon = 1e-10);
        }
        let d = limit_operator(&sys).unwrap();
        for i in 0..m {
            let row: f64 = (0..m).map(|j| d[(i, j)]).sum();
            assert_abs_diff_eq!(row, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn assembly_is_bit_deterministic() {
        let mesh = NestedMesh::build(2, 3, 4).unwrap();
        let media = MediaSpec::builtin("aniso2d", None).unwrap();
        let basis = BasisSet::multiscale(&mesh, &media).unwrap();
        let a = assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap();
        let b = assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap();
        let m = mesh.coarse_node_count();
        for i in 0..m {
            for j in 0..m {
                assert_eq!(a.mass[(i, j)].to_bits(), b.mass[(i, j)].to_bits());
                assert_eq!(a.stiffness[(i, j)].to_bits(), b.stiffness[(i, j)].to_bits());
                assert_eq!(
                    a.media_grad_x[(i, j)].to_bits(),
                    b.media_grad_x[(i, j)].to_bits()
                );
            }
        }
    }

    #[test]
    fn limit_operator_second_derivative_consistency() {
        // mass^-1 D applied to samples of sin(pi x) approaches
        // -pi^2 sin(pi x) at rate O(H^2).
        let mut errors = Vec::new();
        let mut hs = Vec::new();
        for cells in [16usize, 32, 64] {
            let sys = unit_media_system_1d(cells, 8);
            let mesh = NestedMesh::build(1, cells, 8).unwrap();
            let d = limit_operator(&sys).unwrap();
            let f = Mat::<f64>::from_fn(cells, 1, |i, _| {
                (PI * mesh.coarse_node_coord(i)[0]).sin()
            });
            let df = &d * &f;
            let chol = sys.mass.llt(faer::Side::Lower).unwrap();
            let lap = chol.solve(&df);
            let mut err = 0.0f64;
            for i in 0..cells {
                let x = mesh.coarse_node_coord(i)[0];
                err = err.max((lap[(i, 0)] + PI * PI * (PI * x).sin()).abs());
            }
            errors.push(err);
            hs.push(2.0 / cells as f64);
        }
        let rate = (errors[0] / errors[2]).ln() / (hs[0] / hs[2]).ln();
        assert!(
            (rate - 2.0).abs() < 0.3,
            "rate {rate}, errors {errors:?}"
        );
    }

    #[test]
    fn derivative_surrogate_first_order_consistency() {
        // mass^-1 grad_x applied to smooth periodic samples matches the first
        // derivative at rate 2 under coarse refinement.
        let mut errors = Vec::new();
        for cells in [16usize, 32, 64] {
            let sys = unit_media_system_1d(cells, 8);
            let mesh = NestedMesh::build(1, cells, 8).unwrap();
            let f = Mat::<f64>::from_fn(cells, 1, |i, _| {
                (PI * mesh.coarse_node_coord(i)[0]).cos()
            });
            let chol = sys.mass.llt(faer::Side::Lower).unwrap();
            let dfx = chol.solve(&(&sys.grad_x * &f));
            let mut err = 0.0f64;
            for i in 0..cells {
                let x = mesh.coarse_node_coord(i)[0];
                err = err.max((dfx[(i, 0)] + PI * (PI * x).sin()).abs());
            }
            errors.push(err);
        }
        let rate = (errors[0] / errors[2]).ln() / 4f64.ln();
        assert!((rate - 2.0).abs() < 0.2, "rate {rate}, errors {errors:?}");
    }

    #[test]
    fn homogenized_limit_operator_matches_quarter_heat() {
        // With the cos(2 pi x / delta) media, the homogenized coefficient is
        // exactly 1/4; the homogenized limit operator applied to sin(pi x)
        // approaches (1/4)(-pi^2 sin(pi x)).
        use crate::msfem::homogenized_coefficient;
        let media = MediaSpec::builtin("cos_delta", Some(0.125)).unwrap();
        let hom = homogenized_coefficient(&media, 64).unwrap();
        assert_abs_diff_eq!(hom.a_hom[0][0], 0.25, epsilon = 1e-12);

        let cells = 64;
        let mesh = NestedMesh::build(1, cells, 8).unwrap();
        let basis = BasisSet::affine(&mesh);
        let sys = assemble_spatial(&mesh, &basis, Coefficient::Tensor(hom.a_hom)).unwrap();
        let d = limit_operator(&sys).unwrap();
        let f = Mat::<f64>::from_fn(cells, 1, |i, _| (PI * mesh.coarse_node_coord(i)[0]).sin());
        let chol = sys.mass.llt(faer::Side::Lower).unwrap();
        let lap = chol.solve(&(&d * &f));
        for i in 0..cells {
            let x = mesh.coarse_node_coord(i)[0];
            assert_relative_eq!(
                lap[(i, 0)],
                -0.25 * PI * PI * (PI * x).sin(),
                max_relative = 5e-3,
                epsilon = 1e-4
            );
        }
    }

    #[test]
    fn media_mesh_dimension_mismatch_errors() {
        let mesh = NestedMesh::build(1, 4, 4).unwrap();
        let media2 = MediaSpec::builtin("benchmark2d", None).unwrap();
        let basis = BasisSet::affine(&mesh);
        assert!(assemble_spatial(&mesh, &basis, Coefficient::Media(&media2)).is_err());
    }
}
