//! Sparse symmetric solvers for the structured-grid finite element systems.

mod banded;
mod sparse;

pub use banded::BandedSpd;
pub use sparse::{pcg, CsrMatrix, PcgReport};

/// Relative residual ‖b − A x‖ / ‖b‖, with ‖b‖ floored so a zero right-hand
/// side reports the absolute residual.
pub fn relative_residual(residual: &[f64], rhs: &[f64]) -> f64 {
    let rn = norm(residual);
    let bn = norm(rhs);
    if bn > 0.0 {
        rn / bn
    } else {
        rn
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
