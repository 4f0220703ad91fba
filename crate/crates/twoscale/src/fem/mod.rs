//! Finite element kernels: meshes, quadrature, assembly, and the sparse
//! solver contract.

pub mod assemble;
pub mod mesh;
pub mod quad;
pub mod sparse;

pub use assemble::{
    assemble_cell_rhs, assemble_load_dirichlet, assemble_mass_dirichlet,
    assemble_mass_periodic, assemble_stiffness_dirichlet, assemble_stiffness_periodic,
};
pub use mesh::{BoxDomain, DirichletMesh, Matrix, PeriodicMesh, Point, IDENTITY};
pub use sparse::{solve_spd, solve_spd_from, SolveOptions, SparseOperator};
