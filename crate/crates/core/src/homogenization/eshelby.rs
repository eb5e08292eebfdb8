use nalgebra::DMatrix;

use super::tensor::mandel_weights;
use crate::error::{Error, Result};

/// Eshelby tensor of a prolate spheroid whose symmetry axis is local axis 1,
/// embedded in an isotropic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EshelbyTensor {
    /// Components S_ijkl indexed by Voigt pairs (11, 22, 33, 23, 13, 12).
    pub components: DMatrix<f64>,
}

impl EshelbyTensor {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.components[(a, b)]
    }

    /// Mandel form: maps Mandel eigenstrain to Mandel constrained strain.
    pub fn to_mandel(&self) -> DMatrix<f64> {
        let w = mandel_weights(3);
        DMatrix::from_fn(6, 6, |a, b| self.components[(a, b)] * w[a] * w[b])
    }
}

/// Below this distance from 1 the closed form loses too many digits to
/// cancellation and the sphere values are used instead.
const SPHERE_TOLERANCE: f64 = 1e-4;

pub fn eshelby_spheroid(aspect_ratio: f64, nu: f64) -> Result<EshelbyTensor> {
    if !(aspect_ratio >= 1.0 - SPHERE_TOLERANCE) || !aspect_ratio.is_finite() {
        return Err(Error::Parameter(format!("aspect ratio {aspect_ratio} must be ≥ 1")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::Parameter(format!("Poisson ratio {nu} out of range")));
    }
    let mut s = DMatrix::zeros(6, 6);
    let q = 1.0 - nu;
    let (s1111, s2222, s2233, s2211, s1122, s2323, s1212);
    if (aspect_ratio - 1.0).abs() < SPHERE_TOLERANCE {
        s1111 = (7.0 - 5.0 * nu) / (15.0 * q);
        s2222 = s1111;
        s2233 = (5.0 * nu - 1.0) / (15.0 * q);
        s2211 = s2233;
        s1122 = s2233;
        s2323 = (4.0 - 5.0 * nu) / (15.0 * q);
        s1212 = s2323;
    } else {
        let a = aspect_ratio;
        let a2 = a * a;
        let d = a2 - 1.0;
        let g = a / d.powf(1.5) * (a * d.sqrt() - a.acosh());
        let m = 1.0 - 2.0 * nu;
        s1111 = (m + (3.0 * a2 - 1.0) / d - (m + 3.0 * a2 / d) * g) / (2.0 * q);
        s2222 = 3.0 / (8.0 * q) * a2 / d + (m - 9.0 / (4.0 * d)) * g / (4.0 * q);
        s2233 = (a2 / (2.0 * d) - (m + 3.0 / (4.0 * d)) * g) / (4.0 * q);
        s2211 = -a2 / (2.0 * q * d) + (3.0 * a2 / d - m) * g / (4.0 * q);
        s1122 = -(m + 1.0 / d) / (2.0 * q) + (m + 3.0 / (2.0 * d)) * g / (2.0 * q);
        s2323 = (a2 / (2.0 * d) + (m - 3.0 / (4.0 * d)) * g) / (4.0 * q);
        s1212 = (m - (a2 + 1.0) / d - 0.5 * (m - 3.0 * (a2 + 1.0) / d) * g) / (4.0 * q);
    }
    s[(0, 0)] = s1111;
    s[(1, 1)] = s2222;
    s[(2, 2)] = s2222;
    s[(1, 2)] = s2233;
    s[(2, 1)] = s2233;
    s[(1, 0)] = s2211;
    s[(2, 0)] = s2211;
    s[(0, 1)] = s1122;
    s[(0, 2)] = s1122;
    s[(3, 3)] = s2323;
    s[(4, 4)] = s1212;
    s[(5, 5)] = s1212;
    Ok(EshelbyTensor { components: s })
}
