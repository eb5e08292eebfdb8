//! Random two-phase microstructures from level-cut periodic Gaussian random
//! fields, and uncertain chopped-fiber parameters.

mod fiber;
mod grid;
mod rve;
mod spectral;

pub use fiber::{sample_fiber, FiberBounds, FiberRealization};
pub use grid::ScalarGrid;
pub use rve::{level_cut, read_rve, slice_2d, write_pgm, write_rve, RveImage};
pub use spectral::{
    evaluate_field, evaluate_point_direct, evaluate_slice, sample_spectral_coefficients, FieldParams, SpectralField,
};
