use nalgebra::DMatrix;

use super::eshelby::eshelby_spheroid;
use super::tensor::{isotropic_tensor, rotate_tensor, ConstitutiveTensor, Hypothesis, IsotropicPhase};
use crate::error::{Error, Result};
use crate::microstructure::FiberRealization;

/// Mori-Tanaka estimate in the fiber frame (fiber axis along local 1).
pub fn mori_tanaka_local(fiber: &FiberRealization) -> Result<ConstitutiveTensor> {
    fiber.validate()?;
    let cm = isotropic_tensor(IsotropicPhase::new(fiber.e_matrix, fiber.nu_matrix), 3, Hypothesis::ThreeD)?.to_mandel();
    let cf = isotropic_tensor(IsotropicPhase::new(fiber.e_fiber, fiber.nu_fiber), 3, Hypothesis::ThreeD)?.to_mandel();
    let s = eshelby_spheroid(fiber.aspect_ratio, fiber.nu_matrix)?.to_mandel();
    let eye = DMatrix::<f64>::identity(6, 6);
    let singular = || Error::Numerical("singular Mori-Tanaka concentration system".into());
    let cm_inv = cm.clone().try_inverse().ok_or_else(singular)?;
    let jump = &cf - &cm;
    // Dilute strain concentration of a single inclusion.
    let dilute = (&eye + &s * &cm_inv * &jump).try_inverse().ok_or_else(singular)?;
    let vf = fiber.volume_fraction;
    let mix = (&eye * (1.0 - vf) + &dilute * vf).try_inverse().ok_or_else(singular)?;
    let c = &cm + jump * &dilute * mix * vf;
    let out = ConstitutiveTensor::from_mandel(3, &c).symmetrized();
    out.check_spd()?;
    Ok(out)
}

/// Mori-Tanaka estimate rotated to the global frame by the fiber angles.
pub fn mori_tanaka(fiber: &FiberRealization) -> Result<ConstitutiveTensor> {
    let local = mori_tanaka_local(fiber)?;
    rotate_tensor(&local, fiber.angle_inplane, fiber.angle_outplane)
}
