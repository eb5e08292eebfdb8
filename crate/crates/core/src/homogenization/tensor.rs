use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elastic stiffness in Voigt form with engineering shear strains.
///
/// Component order: (11, 22, 12) in 2D, (11, 22, 33, 23, 13, 12) in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstitutiveTensor {
    pub dim: usize,
    pub voigt: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    PlaneStress,
    PlaneStrain,
    #[serde(rename = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicPhase {
    /// Young's modulus.
    pub e: f64,
    /// Poisson's ratio.
    pub nu: f64,
}

impl IsotropicPhase {
    pub fn new(e: f64, nu: f64) -> Self {
        Self { e, nu }
    }

    pub fn validate(&self) -> Result<()> {
        if self.e > 0.0 && self.nu > -1.0 && self.nu < 0.5 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid isotropic phase E = {}, ν = {}", self.e, self.nu)))
        }
    }
}

pub(crate) fn voigt_size(dim: usize) -> usize {
    if dim == 2 {
        3
    } else {
        6
    }
}

/// Mandel weights: 1 on normal components, √2 on shear components.
pub(crate) fn mandel_weights(dim: usize) -> Vec<f64> {
    let s = std::f64::consts::SQRT_2;
    if dim == 2 {
        vec![1.0, 1.0, s]
    } else {
        vec![1.0, 1.0, 1.0, s, s, s]
    }
}

impl ConstitutiveTensor {
    pub fn new(dim: usize, voigt: DMatrix<f64>) -> Result<Self> {
        let n = match dim {
            2 => 3,
            3 => 6,
            _ => return Err(Error::Parameter(format!("dimension {dim} not supported"))),
        };
        if voigt.nrows() != n || voigt.ncols() != n {
            return Err(Error::Parameter(format!("{dim}D tensor needs a {n}×{n} Voigt matrix")));
        }
        Ok(Self { dim, voigt })
    }

    pub fn size(&self) -> usize {
        self.voigt.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.voigt[(i, j)]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            voigt: &self.voigt * s,
        }
    }

    /// Stiffness in Mandel form, where tensor contraction is a matrix product.
    pub fn to_mandel(&self) -> DMatrix<f64> {
        let w = mandel_weights(self.dim);
        DMatrix::from_fn(self.size(), self.size(), |i, j| self.voigt[(i, j)] * w[i] * w[j])
    }

    pub fn from_mandel(dim: usize, m: &DMatrix<f64>) -> Self {
        let w = mandel_weights(dim);
        let n = voigt_size(dim);
        Self {
            dim,
            voigt: DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (w[i] * w[j])),
        }
    }

    /// Largest |C − Cᵀ| relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.voigt.amax().max(f64::MIN_POSITIVE);
        (&self.voigt - self.voigt.transpose()).amax() / scale
    }

    pub fn symmetrized(&self) -> Self {
        Self {
            dim: self.dim,
            voigt: (&self.voigt + self.voigt.transpose()) * 0.5,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.symmetrized().to_mandel()).eigenvalues.min()
    }

    pub fn is_spd(&self) -> bool {
        self.asymmetry() <= 1e-10 && self.min_eigenvalue() > 0.0
    }

    pub fn check_spd(&self) -> Result<()> {
        if self.asymmetry() > 1e-10 {
            return Err(Error::Numerical(format!("tensor not symmetric (relative asymmetry {:e})", self.asymmetry())));
        }
        let m = self.min_eigenvalue();
        if m <= 0.0 {
            return Err(Error::Numerical(format!("tensor not positive definite (min eigenvalue {m:e})")));
        }
        Ok(())
    }

    /// Largest entrywise difference relative to the largest entry of `other`.
    pub fn relative_difference(&self, other: &Self) -> f64 {
        (&self.voigt - &other.voigt).amax() / other.voigt.amax().max(f64::MIN_POSITIVE)
    }
}

pub fn isotropic_tensor(phase: IsotropicPhase, dim: usize, hypothesis: Hypothesis) -> Result<ConstitutiveTensor> {
    phase.validate()?;
    let IsotropicPhase { e, nu } = phase;
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    match (dim, hypothesis) {
        (3, Hypothesis::ThreeD) => {
            let mut c = DMatrix::zeros(6, 6);
            for i in 0..3 {
                for j in 0..3 {
                    c[(i, j)] = lambda;
                }
                c[(i, i)] = lambda + 2.0 * mu;
                c[(i + 3, i + 3)] = mu;
            }
            ConstitutiveTensor::new(3, c)
        }
        (2, Hypothesis::PlaneStrain) => ConstitutiveTensor::new(
            2,
            DMatrix::from_row_slice(
                3,
                3,
                &[lambda + 2.0 * mu, lambda, 0.0, lambda, lambda + 2.0 * mu, 0.0, 0.0, 0.0, mu],
            ),
        ),
        (2, Hypothesis::PlaneStress) => {
            let k = e / (1.0 - nu * nu);
            ConstitutiveTensor::new(
                2,
                DMatrix::from_row_slice(3, 3, &[k, k * nu, 0.0, k * nu, k, 0.0, 0.0, 0.0, mu]),
            )
        }
        _ => Err(Error::Parameter(format!("hypothesis {hypothesis:?} is not valid in {dim}D"))),
    }
}

/// Reduces a 3D tensor to the (11, 22, 12) plane: plane strain keeps the
/// in-plane rows and columns, plane stress condenses out the out-of-plane
/// stresses.
pub fn reduce_to_plane(c: &ConstitutiveTensor, hypothesis: Hypothesis) -> Result<ConstitutiveTensor> {
    if c.dim != 3 {
        return Err(Error::Parameter("reduce_to_plane needs a 3D tensor".into()));
    }
    let a = [0usize, 1, 5];
    let caa = DMatrix::from_fn(3, 3, |i, j| c.voigt[(a[i], a[j])]);
    match hypothesis {
        Hypothesis::PlaneStrain => ConstitutiveTensor::new(2, caa),
        Hypothesis::PlaneStress => {
            let b = [2usize, 3, 4];
            let cab = DMatrix::from_fn(3, 3, |i, j| c.voigt[(a[i], b[j])]);
            let cbb = DMatrix::from_fn(3, 3, |i, j| c.voigt[(b[i], b[j])]);
            let cbb_inv = cbb
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular out-of-plane block".into()))?;
            let red = &caa - &cab * cbb_inv * cab.transpose();
            Ok(ConstitutiveTensor::new(2, red)?.symmetrized())
        }
        Hypothesis::ThreeD => Err(Error::Parameter("reduce_to_plane needs a plane hypothesis".into())),
    }
}

/// Rotation taking the local fiber axis e₁ to
/// (cos θ_o cos θ_i, cos θ_o sin θ_i, sin θ_o): in-plane angle about z,
/// out-of-plane elevation toward z.
pub fn fiber_rotation(angle_inplane: f64, angle_outplane: f64) -> Matrix3<f64> {
    let (si, ci) = angle_inplane.sin_cos();
    let (so, co) = angle_outplane.sin_cos();
    let rz = Matrix3::new(ci, -si, 0.0, si, ci, 0.0, 0.0, 0.0, 1.0);
    // R_y(−θ_o)
    let ry = Matrix3::new(co, 0.0, -so, 0.0, 1.0, 0.0, so, 0.0, co);
    rz * ry
}

/// Mandel-form 6×6 matrix of the map X ↦ R X Rᵀ on symmetric tensors.
fn mandel_rotation(r: &Matrix3<f64>) -> DMatrix<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let pairs = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
    let basis = |a: usize| {
        let (i, j) = pairs[a];
        let mut e = Matrix3::zeros();
        if i == j {
            e[(i, i)] = 1.0;
        } else {
            e[(i, j)] = s;
            e[(j, i)] = s;
        }
        e
    };
    DMatrix::from_fn(6, 6, |a, b| {
        let rotated = r * basis(b) * r.transpose();
        basis(a).component_mul(&rotated).sum()
    })
}

pub fn rotate_by_matrix(c: &ConstitutiveTensor, r: &Matrix3<f64>) -> Result<ConstitutiveTensor> {
    if c.dim != 3 {
        return Err(Error::Parameter("tensor rotation needs a 3D tensor".into()));
    }
    let q = mandel_rotation(r);
    let m = &q * c.to_mandel() * q.transpose();
    Ok(ConstitutiveTensor::from_mandel(3, &m))
}

pub fn rotate_tensor(c: &ConstitutiveTensor, angle_inplane: f64, angle_outplane: f64) -> Result<ConstitutiveTensor> {
    rotate_by_matrix(c, &fiber_rotation(angle_inplane, angle_outplane))
}
