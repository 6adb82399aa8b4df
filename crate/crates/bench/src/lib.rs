//! Shared fixtures for the criterion benchmarks.

use mstransport_core::{
    assemble_spatial, BasisSet, Coefficient, MediaSpec, NestedMesh, SpatialSystem,
    VelocityMode, VelocitySystem,
};

pub struct Fixture {
    pub mesh: NestedMesh,
    pub media: MediaSpec,
    pub basis: BasisSet,
    pub spatial: SpatialSystem,
    pub velocity: VelocitySystem,
}

/// 1D oscillatory benchmark problem sized so a factorization is nontrivial.
pub fn fixture_1d(cells: usize, refinement: usize, order: usize) -> Fixture {
    let mesh = NestedMesh::build(1, cells, refinement).unwrap();
    let media = MediaSpec::builtin("sine20", None).unwrap();
    let basis = BasisSet::multiscale(&mesh, &media).unwrap();
    let spatial = assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap();
    let velocity = VelocitySystem::assemble(order, 2 * order, VelocityMode::Slab1d).unwrap();
    Fixture {
        mesh,
        media,
        basis,
        spatial,
        velocity,
    }
}

/// 2D oscillatory benchmark problem.
pub fn fixture_2d(cells: usize, refinement: usize, order: usize) -> Fixture {
    let mesh = NestedMesh::build(2, cells, refinement).unwrap();
    let media = MediaSpec::builtin("benchmark2d", None).unwrap();
    let basis = BasisSet::multiscale(&mesh, &media).unwrap();
    let spatial = assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap();
    let velocity = VelocitySystem::assemble(order, 2 * order, VelocityMode::Circle2d).unwrap();
    Fixture {
        mesh,
        media,
        basis,
        spatial,
        velocity,
    }
}
