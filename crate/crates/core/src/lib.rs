//! Solver library for the linear transport equation with oscillatory
//! periodic scattering coefficients.
//!
//! The discretization is a Galerkin method that is asymptotic preserving in
//! the parabolic (small Knudsen number) limit and captures the homogenized
//! limit of the oscillation scale: an even-odd reformulation advanced with
//! backward Euler, normalized Legendre polynomials in velocity, and
//! multiscale finite element basis functions in space. Reference heat and
//! homogenized-heat solvers plus a convergence-study harness reproduce the
//! benchmark experiments.

pub mod assembly;
pub mod error;
pub mod harness;
pub mod media;
pub mod mesh;
pub mod msfem;
pub mod solvers;
pub mod velocity;

pub use assembly::{assemble_heat, assemble_spatial, limit_operator, Coefficient, SpatialSystem};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, ExperimentKind, RunOptions, RunReport};
pub use media::{MediaForm, MediaSpec, TabulatedValues};
pub use mesh::NestedMesh;
pub use msfem::{
    homogenized_coefficient, solve_local_basis, BasisMode, BasisSet, HomogenizationResult,
};
pub use solvers::{
    asymmetric_limit_parts, heat_stepper, limit_stepper, project_density, project_initial,
    total_mass, Formulation, ImplicitScalarStepper, KineticState, ScalarState, StepperConfig,
    TransportStepper,
};
pub use velocity::{build_basis, gauss_rule, GaussRule, VelocityMode, VelocitySystem};
