//! Macroscale level-set design on a structured mesh: filtering, ersatz
//! densities, linear elasticity for a microstructure layout and the objective
//! and constraint functionals.

mod export;
mod functionals;
mod levelset;
mod mesh;
mod redistance;
mod solve;

pub use export::{write_density_pgm, write_vtk};
pub use functionals::{
    evaluate, evaluate_fields, perimeter_penalty, regularization_penalty, DesignFields, EvalResult, MacroProblem,
    ObjectiveWeights,
};
pub(crate) use functionals::{shape, GAUSS, GRAD_FLOOR};
pub use levelset::{
    density_from_levelset, element_average, heaviside, material_indicator, seed_holes, smoothed_delta,
    to_design_units, ErsatzParams, FilterMatrix,
};
pub use mesh::{Dirichlet, MacroMesh, PointLoad};
pub use redistance::redistance;
pub use solve::{assemble_solve, element_energy, element_stiffness, ElementMatrix, LayoutAssignment, StiffnessLibrary};
