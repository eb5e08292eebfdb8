//! Homogenized constitutive tensors: periodic finite element homogenization
//! of RVE images, Mori-Tanaka estimates for chopped fibers, and catalogs of
//! realizations.

mod catalog;
mod eshelby;
mod fe;
mod mori_tanaka;
mod tensor;

pub use catalog::{build_catalog, read_catalog, write_catalog, CatalogGenerator, EntryProvenance, MicrostructureCatalog};
pub use eshelby::{eshelby_spheroid, EshelbyTensor};
pub use fe::{homogenize_fe, homogenize_fe_tensors, reuss_voigt_diagonals};
pub(crate) use fe::gauss_b_matrices as fe_gauss_b_matrices;
pub use mori_tanaka::{mori_tanaka, mori_tanaka_local};
pub use tensor::{
    fiber_rotation, isotropic_tensor, reduce_to_plane, rotate_by_matrix, rotate_tensor, ConstitutiveTensor, Hypothesis,
    IsotropicPhase,
};
