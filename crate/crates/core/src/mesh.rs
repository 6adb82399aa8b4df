//! Nested periodic tensor-product grids.
//!
//! A coarse grid with `n` cells per axis is refined by an integer ratio `r`
//! into a nested fine grid. Periodic identification is logical: opposite
//! boundary nodes share one index, so there are exactly `n^dim` coarse nodes
//! and `(n r)^dim` fine nodes, and every matrix stays square of that size.
//!
//! All coordinates derive from the single fine spacing `h = L / (n r)`, so a
//! coarse node coordinate is bit-identical to the fine node it coincides
//! with.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NestedMesh {
    dim: usize,
    bounds: [(f64, f64); 2],
    cells: usize,
    refine: usize,
}

impl NestedMesh {
    /// Uniform nested mesh on `[-1, 1]^dim`.
    pub fn build(dim: usize, coarse_cells: usize, refinement: usize) -> Result<Self> {
        Self::with_bounds(dim, [(-1.0, 1.0), (-1.0, 1.0)], coarse_cells, refinement)
    }

    pub fn with_bounds(
        dim: usize,
        bounds: [(f64, f64); 2],
        coarse_cells: usize,
        refinement: usize,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
        }
        if coarse_cells < 2 {
            return Err(Error::Config(format!(
                "need at least 2 coarse cells per axis, got {coarse_cells}"
            )));
        }
        if refinement < 1 {
            return Err(Error::Config("refinement ratio must be at least 1".into()));
        }
        for (axis, b) in bounds.iter().enumerate().take(dim) {
            if b.1 <= b.0 {
                return Err(Error::Config(format!("empty domain on axis {axis}: {b:?}")));
            }
        }
        Ok(NestedMesh {
            dim,
            bounds,
            cells: coarse_cells,
            refine: refinement,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coarse cells per axis.
    pub fn coarse_cells(&self) -> usize {
        self.cells
    }

    pub fn refinement(&self) -> usize {
        self.refine
    }

    /// Logical coarse nodes (equals coarse elements on a periodic grid).
    pub fn coarse_node_count(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn element_count(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    /// Fine cells per axis.
    pub fn fine_cells_per_axis(&self) -> usize {
        self.cells * self.refine
    }

    pub fn fine_node_count(&self) -> usize {
        self.fine_cells_per_axis().pow(self.dim as u32)
    }

    /// Corner nodes per element: 2 in 1D, 4 in 2D.
    pub fn corners_per_element(&self) -> usize {
        1 << self.dim
    }

    /// Coarse spacing `H` on an axis.
    pub fn coarse_spacing(&self, axis: usize) -> f64 {
        let (a, b) = self.bounds[axis];
        (b - a) / self.cells as f64
    }

    /// Fine spacing `h = H / r` on an axis.
    pub fn fine_spacing(&self, axis: usize) -> f64 {
        let (a, b) = self.bounds[axis];
        (b - a) / (self.cells * self.refine) as f64
    }

    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        self.bounds[axis]
    }

    pub fn domain_measure(&self) -> f64 {
        (0..self.dim)
            .map(|ax| self.bounds[ax].1 - self.bounds[ax].0)
            .product()
    }

    pub fn element_measure(&self) -> f64 {
        (0..self.dim).map(|ax| self.coarse_spacing(ax)).product()
    }

    pub fn fine_cell_measure(&self) -> f64 {
        (0..self.dim).map(|ax| self.fine_spacing(ax)).product()
    }

    /// Quadrature weight of one coarse node in the discrete L2 norm.
    pub fn coarse_node_weight(&self) -> f64 {
        self.element_measure()
    }

    fn axis_coord(&self, axis: usize, fine_index: usize) -> f64 {
        self.bounds[axis].0 + fine_index as f64 * self.fine_spacing(axis)
    }

    /// Split a flat coarse index into per-axis indices.
    pub fn coarse_multi_index(&self, id: usize) -> [usize; 2] {
        [id % self.cells, id / self.cells]
    }

    pub fn coarse_flat_index(&self, i: usize, j: usize) -> usize {
        (j % self.cells) * self.cells + (i % self.cells)
    }

    pub fn fine_multi_index(&self, id: usize) -> [usize; 2] {
        let fx = self.fine_cells_per_axis();
        [id % fx, id / fx]
    }

    pub fn fine_flat_index(&self, i: usize, j: usize) -> usize {
        let fx = self.fine_cells_per_axis();
        (j % fx) * fx + (i % fx)
    }

    pub fn coarse_node_coord(&self, id: usize) -> [f64; 2] {
        let [i, j] = self.coarse_multi_index(id);
        [
            self.axis_coord(0, i * self.refine),
            if self.dim == 2 {
                self.axis_coord(1, j * self.refine)
            } else {
                0.0
            },
        ]
    }

    pub fn fine_node_coord(&self, id: usize) -> [f64; 2] {
        let [i, j] = self.fine_multi_index(id);
        [
            self.axis_coord(0, i),
            if self.dim == 2 { self.axis_coord(1, j) } else { 0.0 },
        ]
    }

    /// Coarse node ids at the corners of an element, in local corner order:
    /// `[left, right]` in 1D, `[SW, SE, NE, NW]` in 2D.
    pub fn element_corners(&self, element: usize) -> Vec<usize> {
        let [i, j] = self.coarse_multi_index(element);
        match self.dim {
            1 => vec![self.coarse_flat_index(i, 0), self.coarse_flat_index(i + 1, 0)],
            _ => vec![
                self.coarse_flat_index(i, j),
                self.coarse_flat_index(i + 1, j),
                self.coarse_flat_index(i + 1, j + 1),
                self.coarse_flat_index(i, j + 1),
            ],
        }
    }

    /// Nodes per axis of an element's local fine lattice.
    pub fn local_nodes_per_axis(&self) -> usize {
        self.refine + 1
    }

    /// Total nodes of an element's local fine lattice.
    pub fn local_node_count(&self) -> usize {
        self.local_nodes_per_axis().pow(self.dim as u32)
    }

    /// Local lattice index of each element corner, matching
    /// [`NestedMesh::element_corners`] order.
    pub fn corner_local_indices(&self) -> Vec<usize> {
        let r = self.refine;
        let w = r + 1;
        match self.dim {
            1 => vec![0, r],
            _ => vec![0, r, r * w + r, r * w],
        }
    }

    /// Global fine node ids of an element's local lattice, row-major with the
    /// x index fastest.
    pub fn element_fine_nodes(&self, element: usize) -> Vec<usize> {
        let [ei, ej] = self.coarse_multi_index(element);
        let r = self.refine;
        let w = r + 1;
        let mut out = Vec::with_capacity(self.local_node_count());
        match self.dim {
            1 => {
                for p in 0..w {
                    out.push(self.fine_flat_index(ei * r + p, 0));
                }
            }
            _ => {
                for q in 0..w {
                    for p in 0..w {
                        out.push(self.fine_flat_index(ei * r + p, ej * r + q));
                    }
                }
            }
        }
        out
    }

    /// Geometric coordinate of a local lattice node (no periodic wrap, so the
    /// far edge of the last element reports the upper domain bound).
    pub fn element_local_coord(&self, element: usize, p: usize, q: usize) -> [f64; 2] {
        let [ei, ej] = self.coarse_multi_index(element);
        [
            self.axis_coord(0, ei * self.refine + p),
            if self.dim == 2 {
                self.axis_coord(1, ej * self.refine + q)
            } else {
                0.0
            },
        ]
    }

    /// Coarse elements whose closure contains the node: 2 in 1D, 4 in 2D.
    pub fn patch_of(&self, node: usize) -> Result<Vec<usize>> {
        if node >= self.coarse_node_count() {
            return Err(Error::Index {
                index: node,
                len: self.coarse_node_count(),
            });
        }
        let [i, j] = self.coarse_multi_index(node);
        let n = self.cells;
        let left = (i + n - 1) % n;
        Ok(match self.dim {
            1 => vec![self.coarse_flat_index(left, 0), self.coarse_flat_index(i, 0)],
            _ => {
                let down = (j + n - 1) % n;
                vec![
                    self.coarse_flat_index(left, down),
                    self.coarse_flat_index(i, down),
                    self.coarse_flat_index(left, j),
                    self.coarse_flat_index(i, j),
                ]
            }
        })
    }

    /// Which corner of `element` is `node`, if any.
    pub fn corner_position(&self, element: usize, node: usize) -> Option<usize> {
        self.element_corners(element).iter().position(|&c| c == node)
    }

    /// Fine-resolution advisory: the fine grid should resolve the media
    /// oscillation with at least 8 points per period.
    pub fn resolution_warning(&self, delta: f64) -> Option<String> {
        let h = (0..self.dim).map(|ax| self.fine_spacing(ax)).fold(0.0, f64::max);
        if h > delta / 8.0 {
            Some(format!(
                "fine spacing h = {h:.4e} does not resolve the media scale delta = {delta:.4e} \
                 (want h <= delta / 8)"
            ))
        } else {
            None
        }
    }
}
