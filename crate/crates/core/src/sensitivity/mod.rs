//! Design gradients of the macroscale functionals for a given layout, their
//! mini-batch averages, and finite-difference checks.

mod bundle;
mod fd;
mod gradients;

pub use bundle::{layout_sample, stochastic_gradient_bundle, GradientBundle, LayoutSample};
pub use fd::{fd_check, write_fd_csv, FdReport, FdRow};
pub use gradients::{
    grad_mass, grad_perimeter, grad_reg, grad_strain_energy, geometric_objective_gradient, GeometricGradients,
};
