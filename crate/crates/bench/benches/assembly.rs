use criterion::{criterion_group, criterion_main, Criterion};

use mstransport_core::{
    assemble_spatial, homogenized_coefficient, solve_local_basis, BasisSet, Coefficient,
    MediaSpec, NestedMesh, VelocityMode, VelocitySystem,
};

fn velocity_matrices(c: &mut Criterion) {
    c.bench_function("velocity_assemble_n16_k32", |b| {
        b.iter(|| VelocitySystem::assemble(16, 32, VelocityMode::Circle2d).unwrap())
    });
}

fn local_basis(c: &mut Criterion) {
    let mesh = NestedMesh::build(2, 8, 16).unwrap();
    let media = MediaSpec::builtin("benchmark2d", None).unwrap();
    c.bench_function("local_basis_solve_2d_r16", |b| {
        b.iter(|| solve_local_basis(&mesh, &media, 0).unwrap())
    });
}

fn spatial_assembly(c: &mut Criterion) {
    let mesh = NestedMesh::build(2, 8, 8).unwrap();
    let media = MediaSpec::builtin("benchmark2d", None).unwrap();
    let basis = BasisSet::multiscale(&mesh, &media).unwrap();
    c.bench_function("spatial_assemble_2d_8x8_r8", |b| {
        b.iter(|| assemble_spatial(&mesh, &basis, Coefficient::Media(&media)).unwrap())
    });
}

fn cell_problem(c: &mut Criterion) {
    let media = MediaSpec::builtin("benchmark2d", None).unwrap();
    c.bench_function("cell_problem_2d_res64", |b| {
        b.iter(|| homogenized_coefficient(&media, 64).unwrap())
    });
}

criterion_group!(benches, velocity_matrices, local_basis, spatial_assembly, cell_problem);
criterion_main!(benches);
