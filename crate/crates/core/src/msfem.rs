//! Multiscale spatial basis construction.
//!
//! Per coarse element, one basis function per corner solves the discrete
//! a-harmonic problem with an affine (hat) boundary trace on the element's
//! fine lattice; summing the per-element pieces over a node's patch yields a
//! continuous global basis with the nodal property and partition of unity.
//! The same machinery solves the periodic cell problem for the homogenized
//! coefficient.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::media::MediaSpec;
use crate::mesh::NestedMesh;

/// Spatial basis flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    /// a-harmonic basis from patch-local solves against the oscillatory media.
    Multiscale,
    /// Plain hat (bilinear) basis, used for the homogenized reference scheme.
    Affine,
}

impl BasisMode {
    pub fn tag(self) -> &'static str {
        match self {
            BasisMode::Multiscale => "multiscale",
            BasisMode::Affine => "affine",
        }
    }
}

/// Reference gradient integrals of the Q1 corner functions on the unit
/// square, corner order [SW, SE, NE, NW]:
/// `AUU[i][j] = int du dv (dNi/du)(dNj/du)` and `AVV` likewise in `v`.
const AUU: [[f64; 4]; 4] = [
    [1.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0],
    [-1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0, -1.0 / 3.0],
    [1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0],
];
const AVV: [[f64; 4]; 4] = [
    [1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
    [1.0 / 6.0, 1.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
    [-1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
];
/// `int du dv dNi/du` and `int du dv dNi/dv` on the unit square.
const BU: [f64; 4] = [-0.5, 0.5, 0.5, -0.5];
const BV: [f64; 4] = [-0.5, -0.5, 0.5, 0.5];

/// Element stiffness of one fine cell `hx * hy` with unit coefficient.
fn cell_stiffness_2d(hx: f64, hy: f64) -> [[f64; 4]; 4] {
    let (ru, rv) = (hy / hx, hx / hy);
    let mut k = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            k[i][j] = ru * AUU[i][j] + rv * AVV[i][j];
        }
    }
    k
}

/// Corner hat value at local lattice coordinates `(p, q)` of an element with
/// `r` fine cells per axis; corner order matches the mesh.
pub fn corner_shape(dim: usize, r: usize, corner: usize, p: usize, q: usize) -> f64 {
    let u = p as f64 / r as f64;
    if dim == 1 {
        return match corner {
            0 => 1.0 - u,
            _ => u,
        };
    }
    let v = q as f64 / r as f64;
    match corner {
        0 => (1.0 - u) * (1.0 - v),
        1 => u * (1.0 - v),
        2 => u * v,
        _ => (1.0 - u) * v,
    }
}

/// Solve the element-local a-harmonic problems: one function per corner with
/// the affine hat trace on the element boundary. Returns the local nodal
/// values on the element's fine lattice, corner order matching the mesh.
pub fn solve_local_basis(
    mesh: &NestedMesh,
    media: &MediaSpec,
    element: usize,
) -> Result<Vec<Vec<f64>>> {
    let dim = mesh.dim();
    let r = mesh.refinement();
    let d = mesh.corners_per_element();
    let w = r + 1;
    let n_local = mesh.local_node_count();

    // Hat traces; with no interior nodes they are already the solution.
    let mut funcs: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            (0..n_local)
                .map(|loc| {
                    let (p, q) = (loc % w, loc / w);
                    corner_shape(dim, r, c, p, q)
                })
                .collect()
        })
        .collect();
    if r < 2 {
        return Ok(funcs);
    }

    let is_boundary = |loc: usize| -> bool {
        let (p, q) = (loc % w, loc / w);
        if dim == 1 {
            p == 0 || p == r
        } else {
            p == 0 || p == r || q == 0 || q == r
        }
    };
    let interior: Vec<usize> = (0..n_local).filter(|&l| !is_boundary(l)).collect();
    let mut interior_pos = vec![usize::MAX; n_local];
    for (k, &l) in interior.iter().enumerate() {
        interior_pos[l] = k;
    }
    let ni = interior.len();

    let hx = mesh.fine_spacing(0);
    let hy = if dim == 2 { mesh.fine_spacing(1) } else { 1.0 };

    // Assemble K_II dense (patches are small) and accumulate K_IB g directly
    // into the right-hand sides.
    let mut k_ii = Mat::<f64>::zeros(ni, ni);
    let mut rhs = Mat::<f64>::zeros(ni, d);
    let cells = if dim == 1 { r } else { r * r };
    for cell in 0..cells {
        let (cp, cq) = (cell % r, cell / r);
        let center = mesh.element_local_coord(
            element,
            cp,
            if dim == 2 { cq } else { 0 },
        );
        let center = [
            center[0] + 0.5 * hx,
            if dim == 2 { center[1] + 0.5 * hy } else { 0.0 },
        ];
        let a = media.checked_evaluate(&center)?;

        let (locals, k_local): (Vec<usize>, Vec<Vec<f64>>) = if dim == 1 {
            (
                vec![cp, cp + 1],
                vec![vec![a / hx, -a / hx], vec![-a / hx, a / hx]],
            )
        } else {
            let base = cq * w + cp;
            let k = cell_stiffness_2d(hx, hy);
            (
                vec![base, base + 1, base + w + 1, base + w],
                k.iter()
                    .map(|row| row.iter().map(|&v| a * v).collect())
                    .collect(),
            )
        };

        for (li, &gi) in locals.iter().enumerate() {
            let ii = interior_pos[gi];
            if ii == usize::MAX {
                continue;
            }
            for (lj, &gj) in locals.iter().enumerate() {
                let jj = interior_pos[gj];
                if jj == usize::MAX {
                    // Boundary column: move the known trace to the RHS.
                    for c in 0..d {
                        rhs[(ii, c)] -= k_local[li][lj] * funcs[c][gj];
                    }
                } else {
                    k_ii[(ii, jj)] += k_local[li][lj];
                }
            }
        }
    }

    let chol = k_ii.llt(faer::Side::Lower).map_err(|_| {
        Error::Assembly(format!("singular local system on element {element}"))
    })?;
    let sol = chol.solve(&rhs);
    for c in 0..d {
        for (k, &l) in interior.iter().enumerate() {
            funcs[c][l] = sol[(k, c)];
        }
        for &v in &funcs[c] {
            if !(-1e-10..=1.0 + 1e-10).contains(&v) {
                return Err(Error::Assembly(format!(
                    "local basis violates the discrete maximum principle on \
                     element {element}: value {v}"
                )));
            }
        }
    }
    Ok(funcs)
}

/// Global spatial basis stored as per-element local pieces. The global
/// function of coarse node `l` restricted to an element is the local function
/// of the corner that coincides with `l`; its support is the node's patch.
#[derive(Debug, Clone)]
pub struct BasisSet {
    mode: BasisMode,
    /// `local[element][corner][local fine node]`
    local: Vec<Vec<Vec<f64>>>,
}

impl BasisSet {
    /// a-harmonic basis; local solves run in parallel, gathered in element
    /// order so the result is deterministic.
    pub fn multiscale(mesh: &NestedMesh, media: &MediaSpec) -> Result<Self> {
        if media.dimension() != mesh.dim() {
            return Err(Error::Config(format!(
                "media dimension {} does not match mesh dimension {}",
                media.dimension(),
                mesh.dim()
            )));
        }
        media.validate()?;
        let local: Result<Vec<_>> = (0..mesh.element_count())
            .into_par_iter()
            .map(|e| solve_local_basis(mesh, media, e))
            .collect();
        Ok(BasisSet {
            mode: BasisMode::Multiscale,
            local: local?,
        })
    }

    /// Hat-function basis on the same storage layout.
    pub fn affine(mesh: &NestedMesh) -> Self {
        let d = mesh.corners_per_element();
        let w = mesh.local_nodes_per_axis();
        let one: Vec<Vec<f64>> = (0..d)
            .map(|c| {
                (0..mesh.local_node_count())
                    .map(|loc| corner_shape(mesh.dim(), mesh.refinement(), c, loc % w, loc / w))
                    .collect()
            })
            .collect();
        BasisSet {
            mode: BasisMode::Affine,
            local: vec![one; mesh.element_count()],
        }
    }

    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    pub fn element_local(&self, element: usize) -> &[Vec<f64>] {
        &self.local[element]
    }

    /// Materialize the global basis function of one coarse node on the global
    /// fine grid.
    pub fn global_nodal_values(&self, mesh: &NestedMesh, node: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; mesh.fine_node_count()];
        for e in mesh.patch_of(node)? {
            let corner = mesh
                .corner_position(e, node)
                .expect("patch element must contain the node");
            let vals = &self.local[e][corner];
            for (loc, &g) in mesh.element_fine_nodes(e).iter().enumerate() {
                out[g] = vals[loc];
            }
        }
        Ok(out)
    }

    /// Sum of all basis functions at every fine node (partition of unity
    /// diagnostic).
    pub fn partition_sum(&self, mesh: &NestedMesh) -> Vec<f64> {
        let mut out = vec![0.0; mesh.fine_node_count()];
        let mut seen = vec![false; mesh.fine_node_count()];
        for e in 0..mesh.element_count() {
            let ids = mesh.element_fine_nodes(e);
            for (loc, &g) in ids.iter().enumerate() {
                if seen[g] {
                    continue;
                }
                seen[g] = true;
                out[g] = self.local[e].iter().map(|f| f[loc]).sum();
            }
        }
        out
    }

    /// Flatten to one row per element with the `d` local functions
    /// concatenated, for the matrix cache.
    pub fn to_flat(&self) -> (usize, usize, Vec<f64>) {
        let rows = self.local.len();
        let cols = self.local[0].len() * self.local[0][0].len();
        let mut flat = Vec::with_capacity(rows * cols);
        for element in &self.local {
            for func in element {
                flat.extend_from_slice(func);
            }
        }
        (rows, cols, flat)
    }

    /// Rebuild from the flattened cache layout: `2^dim` local functions per
    /// element row.
    pub fn from_flat(
        mode: BasisMode,
        dim: usize,
        rows: usize,
        cols: usize,
        flat: Vec<f64>,
    ) -> Result<Self> {
        let d = 1usize << dim;
        if rows == 0 || !cols.is_multiple_of(d) || flat.len() != rows * cols {
            return Err(Error::Config("corrupt basis cache payload".into()));
        }
        let per = cols / d;
        let local = flat
            .chunks(cols)
            .map(|row| row.chunks(per).map(|f| f.to_vec()).collect())
            .collect();
        Ok(BasisSet { mode, local })
    }

    /// Evaluate `sum_l coeffs[l] * phi_l` on the global fine grid.
    pub fn evaluate_on_fine(&self, mesh: &NestedMesh, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mesh.fine_node_count()];
        let mut seen = vec![false; mesh.fine_node_count()];
        for e in 0..mesh.element_count() {
            let corners = mesh.element_corners(e);
            let ids = mesh.element_fine_nodes(e);
            for (loc, &g) in ids.iter().enumerate() {
                if seen[g] {
                    continue;
                }
                seen[g] = true;
                out[g] = corners
                    .iter()
                    .enumerate()
                    .map(|(c, &node)| coeffs[node] * self.local[e][c][loc])
                    .sum();
            }
        }
        out
    }
}

/// Effective coefficient and correctors from the periodic cell problem.
#[derive(Debug, Clone)]
pub struct HomogenizationResult {
    pub dim: usize,
    /// Symmetric positive definite matrix; in 1D only `[0][0]` is meaningful.
    pub a_hom: [[f64; 2]; 2],
    /// Zero-mean periodic correctors on the cell lattice, one per direction.
    pub correctors: Vec<Vec<f64>>,
    /// Cell lattice nodes per axis.
    pub resolution: usize,
}

/// Solve the cell problem for the media's period cell at the given lattice
/// resolution per axis and return the homogenized coefficient.
pub fn homogenized_coefficient(media: &MediaSpec, resolution: usize) -> Result<HomogenizationResult> {
    if resolution < 16 {
        return Err(Error::Config(format!(
            "cell resolution must be at least 16, got {resolution}"
        )));
    }
    media.validate()?;
    let dim = media.dimension();
    let n = resolution;
    let total = n.pow(dim as u32);
    let cell_len = [media.period()[0], if dim == 2 { media.period()[1] } else { 1.0 }];
    let h = [cell_len[0] / n as f64, cell_len[1] / n as f64];
    let cell_measure = if dim == 1 { h[0] } else { h[0] * h[1] };
    let volume = if dim == 1 { cell_len[0] } else { cell_len[0] * cell_len[1] };

    let node_id = |i: usize, j: usize| -> usize { (j % n) * n + (i % n) };

    // Per-cell coefficient at cell centers; per-cell node lists in the Q1
    // corner order.
    let cells = if dim == 1 { n } else { n * n };
    let mut a_cell = Vec::with_capacity(cells);
    let mut cell_nodes: Vec<Vec<usize>> = Vec::with_capacity(cells);
    for c in 0..cells {
        let (ci, cj) = (c % n, c / n);
        let center = [
            (ci as f64 + 0.5) * h[0],
            if dim == 2 { (cj as f64 + 0.5) * h[1] } else { 0.0 },
        ];
        a_cell.push(media.checked_evaluate(&center)?);
        cell_nodes.push(if dim == 1 {
            vec![node_id(ci, 0), node_id(ci + 1, 0)]
        } else {
            vec![
                node_id(ci, cj),
                node_id(ci + 1, cj),
                node_id(ci + 1, cj + 1),
                node_id(ci, cj + 1),
            ]
        });
    }
    let k_unit_2d = cell_stiffness_2d(h[0], h[1]);
    let k_unit = |i: usize, j: usize| -> f64 {
        if dim == 1 {
            if i == j {
                1.0 / h[0]
            } else {
                -1.0 / h[0]
            }
        } else {
            k_unit_2d[i][j]
        }
    };
    // int over cell of e_p . grad(N_i).
    let grad_int = |i: usize, p: usize| -> f64 {
        if dim == 1 {
            if i == 0 {
                -1.0
            } else {
                1.0
            }
        } else if p == 0 {
            BU[i] * h[1]
        } else {
            BV[i] * h[0]
        }
    };

    // Periodic stiffness with node 0 pinned to lift the constant null space.
    let mut trips: Vec<Triplet<usize, usize, f64>> = Vec::new();
    let mut rhs = Mat::<f64>::zeros(total - 1, dim);
    for c in 0..cells {
        let nodes = &cell_nodes[c];
        for (li, &gi) in nodes.iter().enumerate() {
            if gi == 0 {
                continue;
            }
            for (lj, &gj) in nodes.iter().enumerate() {
                if gj == 0 {
                    continue;
                }
                trips.push(Triplet::new(gi - 1, gj - 1, a_cell[c] * k_unit(li, lj)));
            }
            for p in 0..dim {
                rhs[(gi - 1, p)] -= a_cell[c] * grad_int(li, p);
            }
        }
    }
    let stiff = SparseColMat::try_new_from_triplets(total - 1, total - 1, &trips)
        .map_err(|e| Error::Assembly(format!("cell problem assembly failed: {e:?}")))?;
    let chol = stiff
        .sp_cholesky(faer::Side::Lower)
        .map_err(|_| Error::Assembly("singular cell problem".into()))?;
    let sol = chol.solve(&rhs);

    let mut correctors: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for p in 0..dim {
        let mut chi = vec![0.0; total];
        for i in 1..total {
            chi[i] = sol[(i - 1, p)];
        }
        let mean = chi.iter().sum::<f64>() / total as f64;
        for v in &mut chi {
            *v -= mean;
        }
        correctors.push(chi);
    }

    // a_hom e_p . e_q = (1/|cell|) sum_c a_c int (grad chi_p + e_p).(grad chi_q + e_q)
    let mut a_hom = [[0.0; 2]; 2];
    for p in 0..dim {
        for q in p..dim {
            let mut total_energy = 0.0;
            for c in 0..cells {
                let nodes = &cell_nodes[c];
                let d = nodes.len();
                let mut cross = 0.0;
                let mut grad2 = 0.0;
                for li in 0..d {
                    let cp = correctors[p][nodes[li]];
                    let cq = correctors[q][nodes[li]];
                    cross += cp * grad_int(li, q) + cq * grad_int(li, p);
                    for lj in 0..d {
                        grad2 += cp * k_unit(li, lj) * correctors[q][nodes[lj]];
                    }
                }
                let ee = if p == q { cell_measure } else { 0.0 };
                total_energy += a_cell[c] * (grad2 + cross + ee);
            }
            a_hom[p][q] = total_energy / volume;
            a_hom[q][p] = a_hom[p][q];
        }
    }
    if dim == 1 {
        a_hom[1][1] = 0.0;
    }

    Ok(HomogenizationResult {
        dim,
        a_hom,
        correctors,
        resolution,
    })
}
