use super::mesh::MacroMesh;
use crate::error::{Error, Result};
use crate::homogenization::{ConstitutiveTensor, MicrostructureCatalog};
use crate::linalg::{norm, BandedSpd};

/// Catalog index per macro element (one layout realization).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayoutAssignment {
    pub entries: Vec<usize>,
}

impl LayoutAssignment {
    pub fn uniform(elements: usize, entry: usize) -> Self {
        Self {
            entries: vec![entry; elements],
        }
    }

    pub fn validate(&self, elements: usize, catalog_size: usize) -> Result<()> {
        if self.entries.len() != elements {
            return Err(Error::Parameter(format!(
                "layout has {} entries for {elements} elements",
                self.entries.len()
            )));
        }
        if let Some(&bad) = self.entries.iter().find(|&&i| i >= catalog_size) {
            return Err(Error::Bounds(format!("layout index {bad} outside catalog of {catalog_size}")));
        }
        Ok(())
    }
}

pub type ElementMatrix = [[f64; 8]; 8];

/// Bilinear square element stiffness (unit thickness) for constitutive
/// matrix `c`; independent of the element size in 2D.
pub fn element_stiffness(c: &ConstitutiveTensor) -> ElementMatrix {
    let b = crate::homogenization::fe_gauss_b_matrices(2, &[1.0, 1.0]);
    let mut k = [[0.0; 8]; 8];
    for (bm, w) in b {
        let cb = &c.voigt * &bm;
        let kk = bm.transpose() * cb * w;
        for i in 0..8 {
            for j in 0..8 {
                k[i][j] += kk[(i, j)];
            }
        }
    }
    for i in 0..8 {
        for j in 0..i {
            let s = 0.5 * (k[i][j] + k[j][i]);
            k[i][j] = s;
            k[j][i] = s;
        }
    }
    k
}

/// Element stiffness matrices of every catalog entry, computed once.
#[derive(Debug, Clone)]
pub struct StiffnessLibrary {
    pub matrices: Vec<ElementMatrix>,
}

impl StiffnessLibrary {
    pub fn new(catalog: &MicrostructureCatalog) -> Result<Self> {
        if catalog.dim != 2 {
            return Err(Error::Parameter(format!("macro model needs a 2D catalog, got {}D", catalog.dim)));
        }
        Ok(Self {
            matrices: catalog.entries.iter().map(element_stiffness).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// u_eᵀ k u_e for one element.
pub fn element_energy(k: &ElementMatrix, u: &[f64], dofs: &[usize; 8]) -> f64 {
    let mut ue = [0.0; 8];
    for a in 0..8 {
        ue[a] = u[dofs[a]];
    }
    let mut acc = 0.0;
    for a in 0..8 {
        let mut row = 0.0;
        for b in 0..8 {
            row += k[a][b] * ue[b];
        }
        acc += ue[a] * row;
    }
    acc
}

const RESIDUAL_TOLERANCE: f64 = 1e-10;

fn band_permutation(mesh: &MacroMesh) -> (Vec<usize>, usize) {
    let (nx1, ny1) = (mesh.nodes_x(), mesh.nodes_y());
    let mut perm = vec![0; mesh.dof_count()];
    for j in 0..ny1 {
        for i in 0..nx1 {
            // Shorter side runs fastest.
            let pos = if ny1 <= nx1 { j + ny1 * i } else { i + nx1 * j };
            let n = i + nx1 * j;
            perm[2 * n] = 2 * pos;
            perm[2 * n + 1] = 2 * pos + 1;
        }
    }
    let short = nx1.min(ny1);
    (perm, 2 * (short + 1) + 1)
}

/// r = F − K u element by element, constrained rows set to zero.
// Error-free transformations; the refinement residual is accumulated in
// double-double so the refined solution is accurate to working precision
// regardless of the density contrast.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn dd_add(acc: &mut (f64, f64), hi: f64, lo: f64) {
    let (s, e) = two_sum(acc.0, hi);
    let e = e + acc.1 + lo;
    let (s2, e2) = two_sum(s, e);
    *acc = (s2, e2);
}

fn residual(mesh: &MacroMesh, density: &[f64], layout: &LayoutAssignment, lib: &StiffnessLibrary, f: &[f64], u: &[f64]) -> Vec<f64> {
    let mut acc: Vec<(f64, f64)> = f.iter().map(|&v| (v, 0.0)).collect();
    for e in 0..mesh.element_count() {
        let k = &lib.matrices[layout.entries[e]];
        let dofs = mesh.element_dofs(e);
        for a in 0..8 {
            let mut row = (0.0, 0.0);
            for b in 0..8 {
                let (p, pe) = two_prod(k[a][b], u[dofs[b]]);
                dd_add(&mut row, p, pe);
            }
            let (p, pe) = two_prod(density[e], row.0);
            dd_add(&mut acc[dofs[a]], -p, -(pe + density[e] * row.1));
        }
    }
    let mut r: Vec<f64> = acc.iter().map(|&(h, l)| h + l).collect();
    for d in &mesh.dirichlet {
        r[2 * d.node + d.component] = 0.0;
    }
    r
}

/// Solves K(ρ, layout) u = F with k_e = ρ_e k(C_layout[e]).
pub fn assemble_solve(
    mesh: &MacroMesh,
    density: &[f64],
    layout: &LayoutAssignment,
    lib: &StiffnessLibrary,
) -> Result<Vec<f64>> {
    let ne = mesh.element_count();
    if density.len() != ne {
        return Err(Error::Parameter(format!("{} densities for {ne} elements", density.len())));
    }
    layout.validate(ne, lib.len())?;
    let (perm, bw) = band_permutation(mesh);
    let mut k = BandedSpd::new(mesh.dof_count(), bw, Some(perm));
    for e in 0..ne {
        let ke = &lib.matrices[layout.entries[e]];
        let dofs = mesh.element_dofs(e);
        let rho = density[e];
        for a in 0..8 {
            for b in 0..8 {
                k.add(dofs[a], dofs[b], rho * ke[a][b]);
            }
        }
    }
    let mut f = mesh.load_vector();
    // Prescribed values enter the load through the constrained columns.
    let mut rhs = f.clone();
    for d in &mesh.dirichlet {
        k.constrain(2 * d.node + d.component, d.value, &mut rhs);
    }
    k.factor().map_err(|e| {
        Error::Solver(format!(
            "{e}; macro stiffness is singular or indefinite (check supports; min density {:e})",
            density.iter().cloned().fold(f64::INFINITY, f64::min)
        ))
    })?;
    let mut u = k.solve(&rhs);
    for d in &mesh.dirichlet {
        f[2 * d.node + d.component] = 0.0;
    }
    let fnorm = norm(&f).max(f64::MIN_POSITIVE);
    // Two unconditional refinement sweeps: the result is then a smooth
    // function of the density, which finite-difference checks rely on.
    for _ in 0..2 {
        let r = residual(mesh, density, layout, lib, &f, &u);
        let du = k.solve(&r);
        for (ui, di) in u.iter_mut().zip(&du) {
            *ui += di;
        }
    }
    let rel = norm(&residual(mesh, density, layout, lib, &f, &u)) / fnorm;
    if rel > RESIDUAL_TOLERANCE {
        return Err(Error::Solver(format!("macro solve residual {rel:e} above {RESIDUAL_TOLERANCE:e}")));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogenization::{isotropic_tensor, Hypothesis, IsotropicPhase};
    use crate::macro_model::mesh::{Dirichlet, PointLoad};

    fn iso_catalog(e: f64, nu: f64) -> MicrostructureCatalog {
        let c = isotropic_tensor(IsotropicPhase::new(e, nu), 2, Hypothesis::PlaneStress).unwrap();
        MicrostructureCatalog::from_entries(vec![c], "iso").unwrap()
    }

    #[test]
    fn single_element_tension_matches_closed_form() {
        // Unit square, left edge on rollers (u_x = 0) with one pinned node,
        // total tensile load 1 split over the right nodes. With ν = 0 the
        // bilinear element represents the uniform stress state exactly:
        // u_x = F L / (E A) on the loaded edge.
        let e_mod = 4.0;
        let mut m = MacroMesh::new(1, 1, 1.0).unwrap();
        m.dirichlet = vec![
            Dirichlet { node: 0, component: 0, value: 0.0 },
            Dirichlet { node: 0, component: 1, value: 0.0 },
            Dirichlet { node: 2, component: 0, value: 0.0 },
        ];
        m.loads = vec![
            PointLoad { node: 1, component: 0, magnitude: 0.5 },
            PointLoad { node: 3, component: 0, magnitude: 0.5 },
        ];
        let lib = StiffnessLibrary::new(&iso_catalog(e_mod, 0.0)).unwrap();
        let u = assemble_solve(&m, &[1.0], &LayoutAssignment::uniform(1, 0), &lib).unwrap();
        assert!((u[2] - 0.25).abs() < 1e-12);
        assert!((u[6] - 0.25).abs() < 1e-12);
        assert!(u[3].abs() < 1e-12 && u[7].abs() < 1e-12 && u[5].abs() < 1e-12);
    }

    #[test]
    fn element_stiffness_matches_textbook_entry() {
        // Plane stress Q4, E = 1, ν = 0.3, unit square: k₁₁ = (1/(1−ν²))(1/2 − ν/6).
        let lib = StiffnessLibrary::new(&iso_catalog(1.0, 0.3)).unwrap();
        let nu: f64 = 0.3;
        let k11 = (0.5 - nu / 6.0) / (1.0 - nu * nu);
        assert!((lib.matrices[0][0][0] - k11).abs() < 1e-14);
    }

    #[test]
    fn linear_in_load_and_density() {
        let m = MacroMesh::cantilever(6, 3, 0.5, 1.0).unwrap();
        let lib = StiffnessLibrary::new(&iso_catalog(1.0, 0.3)).unwrap();
        let lay = LayoutAssignment::uniform(18, 0);
        let u1 = assemble_solve(&m, &[1.0; 18], &lay, &lib).unwrap();
        let mut m2 = m.clone();
        m2.loads[0].magnitude *= 2.0;
        let u2 = assemble_solve(&m2, &[1.0; 18], &lay, &lib).unwrap();
        let uf = assemble_solve(&m, &[1e-6; 18], &lay, &lib).unwrap();
        for i in 0..u1.len() {
            assert!((u2[i] - 2.0 * u1[i]).abs() < 1e-12 * u1[i].abs().max(1.0));
            assert!((uf[i] - 1e6 * u1[i]).abs() < 1e-6 * u1[i].abs().max(1e-6) * 1e6);
        }
    }

    #[test]
    fn bad_layout_rejected() {
        let m = MacroMesh::cantilever(2, 2, 1.0, 1.0).unwrap();
        let lib = StiffnessLibrary::new(&iso_catalog(1.0, 0.3)).unwrap();
        let lay = LayoutAssignment::uniform(4, 3);
        assert!(matches!(assemble_solve(&m, &[1.0; 4], &lay, &lib), Err(Error::Bounds(_))));
    }

    #[test]
    fn unsupported_mesh_reports_solver_error() {
        let mut m = MacroMesh::new(2, 1, 1.0).unwrap();
        m.dirichlet = vec![Dirichlet { node: 0, component: 0, value: 0.0 }];
        m.loads = vec![PointLoad { node: 5, component: 1, magnitude: 1.0 }];
        let lib = StiffnessLibrary::new(&iso_catalog(1.0, 0.3)).unwrap();
        assert!(matches!(
            assemble_solve(&m, &[1.0; 2], &LayoutAssignment::uniform(2, 0), &lib),
            Err(Error::Solver(_))
        ));
    }
}
