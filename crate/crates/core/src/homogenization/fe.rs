use nalgebra::DMatrix;

use super::tensor::{isotropic_tensor, voigt_size, ConstitutiveTensor, Hypothesis, IsotropicPhase};
use crate::error::{Error, Result};
use crate::linalg::{norm, pcg, BandedSpd, CsrMatrix};
use crate::microstructure::RveImage;

/// Tolerance on the true relative residual of every cell problem.
const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Per-phase element operators on a regular periodic grid of the unit cell.
struct ElementOperators {
    /// Element stiffness, dofs ordered node-major.
    stiffness: DMatrix<f64>,
    /// ∫ Bᵀ C over the element.
    coupling: DMatrix<f64>,
    /// Element volume times C.
    volume_c: DMatrix<f64>,
}

pub(crate) fn gauss_b_matrices(dim: usize, h: &[f64]) -> Vec<(DMatrix<f64>, f64)> {
    let nn = 1 << dim;
    let nv = voigt_size(dim);
    let off = 0.5 / 3f64.sqrt();
    let vol: f64 = h.iter().product();
    let mut out = Vec::with_capacity(nn);
    for gp in 0..nn {
        let xi: Vec<f64> = (0..dim).map(|d| if gp >> d & 1 == 1 { 0.5 + off } else { 0.5 - off }).collect();
        let mut b = DMatrix::zeros(nv, dim * nn);
        for a in 0..nn {
            let grad: Vec<f64> = (0..dim)
                .map(|d| {
                    let mut g = 1.0 / h[d];
                    for e in 0..dim {
                        let on = a >> e & 1 == 1;
                        if e == d {
                            g *= if on { 1.0 } else { -1.0 };
                        } else {
                            g *= if on { xi[e] } else { 1.0 - xi[e] };
                        }
                    }
                    g
                })
                .collect();
            let c = a * dim;
            for d in 0..dim {
                b[(d, c + d)] = grad[d];
            }
            if dim == 2 {
                b[(2, c)] = grad[1];
                b[(2, c + 1)] = grad[0];
            } else {
                b[(3, c + 1)] = grad[2];
                b[(3, c + 2)] = grad[1];
                b[(4, c)] = grad[2];
                b[(4, c + 2)] = grad[0];
                b[(5, c)] = grad[1];
                b[(5, c + 1)] = grad[0];
            }
        }
        out.push((b, vol / nn as f64));
    }
    out
}

fn element_operators(c: &ConstitutiveTensor, h: &[f64]) -> ElementOperators {
    let dim = c.dim;
    let nd = dim << dim;
    let mut stiffness = DMatrix::zeros(nd, nd);
    let mut coupling = DMatrix::zeros(nd, voigt_size(dim));
    for (b, w) in gauss_b_matrices(dim, h) {
        let btc = b.transpose() * &c.voigt * w;
        stiffness += &btc * &b;
        coupling += btc;
    }
    let vol: f64 = h.iter().product();
    ElementOperators {
        stiffness: (&stiffness + stiffness.transpose()) * 0.5,
        coupling,
        volume_c: &c.voigt * vol,
    }
}

/// Periodic node numbering of a cell grid.
struct PeriodicGrid {
    dims: Vec<usize>,
}

impl PeriodicGrid {
    fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    fn element_count(&self) -> usize {
        self.node_count()
    }

    /// Global nodes of element `e` in local corner order (bit d of the corner
    /// index selects the upper side along axis d).
    fn element_nodes(&self, e: usize, out: &mut [usize]) {
        let dim = self.dims.len();
        let mut ijk = [0usize; 3];
        let mut rem = e;
        for d in 0..dim {
            ijk[d] = rem % self.dims[d];
            rem /= self.dims[d];
        }
        for (a, slot) in out.iter_mut().enumerate().take(1 << dim) {
            let mut idx = 0;
            let mut stride = 1;
            for d in 0..dim {
                let i = (ijk[d] + (a >> d & 1)) % self.dims[d];
                idx += i * stride;
                stride *= self.dims[d];
            }
            *slot = idx;
        }
    }

    fn element_dofs(&self, e: usize, nodes: &mut [usize], dofs: &mut [usize]) {
        let dim = self.dims.len();
        self.element_nodes(e, nodes);
        for (a, &n) in nodes.iter().enumerate().take(1 << dim) {
            for c in 0..dim {
                dofs[a * dim + c] = n * dim + c;
            }
        }
    }
}

/// Position of index `i` in the order 0, g−1, 1, g−2, …, which keeps periodic
/// neighbours within two places of each other.
fn fold(i: usize, g: usize) -> usize {
    if 2 * i < g {
        2 * i
    } else {
        2 * (g - 1 - i) + 1
    }
}

/// Bilinear/trilinear periodic finite element homogenization of a two-phase
/// image. `stiff` is used where the image is set, `compliant` elsewhere.
pub fn homogenize_fe(
    rve: &RveImage,
    stiff: IsotropicPhase,
    compliant: IsotropicPhase,
    hypothesis: Hypothesis,
) -> Result<ConstitutiveTensor> {
    let dim = rve.dim();
    let cs = isotropic_tensor(stiff, dim, hypothesis)?;
    let cc = isotropic_tensor(compliant, dim, hypothesis)?;
    homogenize_fe_tensors(rve, &cs, &cc)
}

pub fn homogenize_fe_tensors(
    rve: &RveImage,
    stiff: &ConstitutiveTensor,
    compliant: &ConstitutiveTensor,
) -> Result<ConstitutiveTensor> {
    let dim = rve.dim();
    if stiff.dim != dim || compliant.dim != dim {
        return Err(Error::Parameter(format!("phase tensors do not match the {dim}D image")));
    }
    if rve.dims.iter().any(|&g| g < 2) {
        return Err(Error::Parameter(format!("periodic cell needs at least 2 voxels per axis, got {:?}", rve.dims)));
    }
    let h: Vec<f64> = rve.dims.iter().map(|&g| 1.0 / g as f64).collect();
    let ops = [element_operators(compliant, &h), element_operators(stiff, &h)];
    let grid = PeriodicGrid { dims: rve.dims.clone() };
    let nv = voigt_size(dim);
    let ndof = grid.node_count() * dim;
    let anchored: Vec<usize> = (0..dim).collect();

    let loads: Vec<Vec<f64>> = (0..nv)
        .map(|j| {
            let mut f = vec![0.0; ndof];
            scatter_elements(&grid, rve, |e, dofs| {
                let g = &ops[rve.phase[e] as usize].coupling;
                for (r, &dof) in dofs.iter().enumerate() {
                    f[dof] -= g[(r, j)];
                }
            });
            for &d in &anchored {
                f[d] = 0.0;
            }
            f
        })
        .collect();

    let solutions = if dim == 2 {
        solve_banded(&grid, rve, &ops, &anchored, &loads)?
    } else {
        solve_pcg(&grid, rve, &ops, &anchored, &loads)?
    };

    // Element loads cancel on uniform regions, so the assembled load can be
    // pure round-off; measure residuals against the uncancelled magnitude.
    let load_scale: Vec<f64> = (0..nv)
        .map(|j| {
            let per_phase = ops.each_ref().map(|op| op.coupling.column(j).norm_squared());
            let stiff = rve.phase.iter().filter(|&&p| p).count() as f64;
            (per_phase[1] * stiff + per_phase[0] * (rve.phase.len() as f64 - stiff)).sqrt()
        })
        .collect();
    for ((f, u), scale) in loads.iter().zip(&solutions).zip(&load_scale) {
        let r = element_residual(&grid, rve, &ops, &anchored, f, u);
        let rel = norm(&r) / norm(f).max(*scale);
        if !(rel <= RESIDUAL_TOLERANCE) {
            return Err(Error::Solver(format!("cell problem residual {rel:e} above {RESIDUAL_TOLERANCE:e}")));
        }
    }

    let mut c = DMatrix::zeros(nv, nv);
    let nd = dim << dim;
    let mut ue = vec![0.0; nd];
    for (j, u) in solutions.iter().enumerate() {
        let mut col = vec![0.0; nv];
        scatter_elements(&grid, rve, |e, dofs| {
            let op = &ops[rve.phase[e] as usize];
            for (k, &d) in dofs.iter().enumerate() {
                ue[k] = u[d];
            }
            for i in 0..nv {
                let mut acc = op.volume_c[(i, j)];
                for k in 0..nd {
                    acc += op.coupling[(k, i)] * ue[k];
                }
                col[i] += acc;
            }
        });
        for i in 0..nv {
            c[(i, j)] = col[i];
        }
    }
    let out = ConstitutiveTensor::new(dim, c)?.symmetrized();
    out.check_spd()?;
    Ok(out)
}

fn scatter_elements(grid: &PeriodicGrid, rve: &RveImage, mut f: impl FnMut(usize, &[usize])) {
    let dim = rve.dim();
    let mut nodes = [0usize; 8];
    let mut dofs = [0usize; 24];
    let nd = dim << dim;
    for e in 0..grid.element_count() {
        grid.element_dofs(e, &mut nodes, &mut dofs);
        f(e, &dofs[..nd]);
    }
}

/// r = f − K u computed element by element, anchored rows excluded.
fn element_residual(
    grid: &PeriodicGrid,
    rve: &RveImage,
    ops: &[ElementOperators; 2],
    anchored: &[usize],
    f: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let mut r = f.to_vec();
    scatter_elements(grid, rve, |e, dofs| {
        let k = &ops[rve.phase[e] as usize].stiffness;
        for (a, &da) in dofs.iter().enumerate() {
            let mut acc = 0.0;
            for (b, &db) in dofs.iter().enumerate() {
                acc += k[(a, b)] * u[db];
            }
            r[da] -= acc;
        }
    });
    for &d in anchored {
        r[d] = 0.0;
    }
    r
}

fn solve_banded(
    grid: &PeriodicGrid,
    rve: &RveImage,
    ops: &[ElementOperators; 2],
    anchored: &[usize],
    loads: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let (g0, g1) = (grid.dims[0], grid.dims[1]);
    // The shorter axis runs fastest to keep the band narrow.
    let inner_first = g0 <= g1;
    let ndof = grid.node_count() * 2;
    let mut perm = vec![0usize; ndof];
    for j in 0..g1 {
        for i in 0..g0 {
            let pos = if inner_first {
                fold(j, g1) * g0 + fold(i, g0)
            } else {
                fold(i, g0) * g1 + fold(j, g1)
            };
            let node = i + g0 * j;
            perm[2 * node] = 2 * pos;
            perm[2 * node + 1] = 2 * pos + 1;
        }
    }
    let mut element_dofs = Vec::with_capacity(grid.element_count());
    scatter_elements(grid, rve, |_, dofs| element_dofs.push(dofs.to_vec()));
    let bw = BandedSpd::bandwidth_for(&perm, element_dofs.iter().map(|d| d.as_slice()));
    let mut k = BandedSpd::new(ndof, bw, Some(perm));
    for (e, dofs) in element_dofs.iter().enumerate() {
        let ke = &ops[rve.phase[e] as usize].stiffness;
        for (a, &da) in dofs.iter().enumerate() {
            for (b, &db) in dofs.iter().enumerate() {
                k.add(da, db, ke[(a, b)]);
            }
        }
    }
    let mut scratch = vec![0.0; ndof];
    for &d in anchored {
        k.constrain(d, 0.0, &mut scratch);
    }
    k.factor()?;
    Ok(loads.iter().map(|f| k.solve(f)).collect())
}

fn solve_pcg(
    grid: &PeriodicGrid,
    rve: &RveImage,
    ops: &[ElementOperators; 2],
    anchored: &[usize],
    loads: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let dim = 3;
    let nodes = grid.node_count();
    let d = &grid.dims;
    let mut pattern = Vec::with_capacity(nodes * dim);
    for n in 0..nodes {
        let (i, j, k) = (n % d[0], n / d[0] % d[1], n / (d[0] * d[1]));
        let mut neigh = Vec::with_capacity(27);
        for dk in [d[2] - 1, 0, 1] {
            for dj in [d[1] - 1, 0, 1] {
                for di in [d[0] - 1, 0, 1] {
                    neigh.push((i + di) % d[0] + d[0] * ((j + dj) % d[1] + d[1] * ((k + dk) % d[2])));
                }
            }
        }
        neigh.sort_unstable();
        neigh.dedup();
        let cols: Vec<usize> = neigh.iter().flat_map(|&m| (0..dim).map(move |c| m * dim + c)).collect();
        for _ in 0..dim {
            pattern.push(cols.clone());
        }
    }
    let mut a = CsrMatrix::from_pattern(&pattern);
    drop(pattern);
    scatter_elements(grid, rve, |e, dofs| {
        let ke = &ops[rve.phase[e] as usize].stiffness;
        for (p, &dp) in dofs.iter().enumerate() {
            for (q, &dq) in dofs.iter().enumerate() {
                a.add(dp, dq, ke[(p, q)]);
            }
        }
    });
    for &dof in anchored {
        a.set_identity_row(dof);
    }
    let max_iter = 20 * a.dim();
    loads
        .iter()
        .map(|f| pcg(&a, f, 1e-11, max_iter).map(|(u, _)| u))
        .collect()
}

/// Diagonals of the Reuss (harmonic) and Voigt (arithmetic) bounds for a
/// two-phase mixture with stiff volume fraction `vf`.
pub fn reuss_voigt_diagonals(
    stiff: &ConstitutiveTensor,
    compliant: &ConstitutiveTensor,
    vf: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let singular = || Error::Numerical("singular phase tensor".into());
    let upper = &stiff.voigt * vf + &compliant.voigt * (1.0 - vf);
    let mean_compliance = stiff.voigt.clone().try_inverse().ok_or_else(singular)? * vf
        + compliant.voigt.clone().try_inverse().ok_or_else(singular)? * (1.0 - vf);
    let lower = mean_compliance.try_inverse().ok_or_else(singular)?;
    let n = upper.nrows();
    Ok(((0..n).map(|i| lower[(i, i)]).collect(), (0..n).map(|i| upper[(i, i)]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steel() -> IsotropicPhase {
        IsotropicPhase::new(200.0, 0.3)
    }

    fn soft() -> IsotropicPhase {
        IsotropicPhase::new(0.2, 0.3)
    }

    #[test]
    fn fold_is_a_permutation_with_short_hops() {
        for g in 2..9 {
            let mut seen: Vec<usize> = (0..g).map(|i| fold(i, g)).collect();
            for i in 0..g {
                assert!(fold(i, g).abs_diff(fold((i + 1) % g, g)) <= 2);
            }
            seen.sort();
            assert_eq!(seen, (0..g).collect::<Vec<_>>());
        }
    }

    #[test]
    fn element_stiffness_has_rigid_modes_only() {
        for dim in [2, 3] {
            let hyp = if dim == 2 { Hypothesis::PlaneStrain } else { Hypothesis::ThreeD };
            let c = isotropic_tensor(steel(), dim, hyp).unwrap();
            let ops = element_operators(&c, &vec![0.5; dim]);
            let eig = nalgebra::SymmetricEigen::new(ops.stiffness).eigenvalues;
            let scale = eig.max();
            let zero = eig.iter().filter(|&&v| v.abs() < 1e-10 * scale).count();
            assert_eq!(zero, if dim == 2 { 3 } else { 6 });
            assert!(eig.iter().all(|&v| v > -1e-10 * scale));
        }
    }

    #[test]
    fn uniform_cell_returns_the_phase() {
        for (dims, hyp) in [(vec![6, 4], Hypothesis::PlaneStress), (vec![3, 4, 3], Hypothesis::ThreeD)] {
            let rve = RveImage::uniform(dims.clone(), true);
            let c = homogenize_fe(&rve, steel(), soft(), hyp).unwrap();
            let expect = isotropic_tensor(steel(), dims.len(), hyp).unwrap();
            assert!(c.relative_difference(&expect) < 1e-8, "{dims:?}");
        }
    }

    #[test]
    fn layered_cell_matches_laminate_formulas() {
        // Layers normal to axis 1 (stacked along y): E_xx is the arithmetic
        // mean of plane-strain moduli, the normal-normal yy entry harmonic.
        let rve = RveImage::from_fn(vec![4, 8], |ijk| ijk[1] < 4);
        let c = homogenize_fe(&rve, steel(), soft(), Hypothesis::PlaneStrain).unwrap();
        let cs = isotropic_tensor(steel(), 2, Hypothesis::PlaneStrain).unwrap();
        let cc = isotropic_tensor(soft(), 2, Hypothesis::PlaneStrain).unwrap();
        let shear = 1.0 / (0.5 / cs.get(2, 2) + 0.5 / cc.get(2, 2));
        let c22 = 1.0 / (0.5 / cs.get(1, 1) + 0.5 / cc.get(1, 1));
        assert!((c.get(2, 2) - shear).abs() < 1e-8 * shear);
        assert!((c.get(1, 1) - c22).abs() < 1e-8 * c22);
        // Exact laminate C11 = ⟨C11 − C12²/C22⟩ + ⟨C12/C22⟩² / ⟨1/C22⟩.
        let avg = |f: &dyn Fn(&ConstitutiveTensor) -> f64| 0.5 * (f(&cs) + f(&cc));
        let c11 = avg(&|t| t.get(0, 0) - t.get(0, 1).powi(2) / t.get(1, 1))
            + avg(&|t| t.get(0, 1) / t.get(1, 1)).powi(2) / avg(&|t| 1.0 / t.get(1, 1));
        assert!((c.get(0, 0) - c11).abs() < 1e-8 * c11);
    }

    #[test]
    fn checkerboard_respects_bounds_and_symmetry() {
        let rve = RveImage::from_fn(vec![8, 8], |ijk| (ijk[0] / 4 + ijk[1] / 4) % 2 == 0);
        let hyp = Hypothesis::PlaneStress;
        let c = homogenize_fe(&rve, steel(), soft(), hyp).unwrap();
        let (lo, hi) = reuss_voigt_diagonals(
            &isotropic_tensor(steel(), 2, hyp).unwrap(),
            &isotropic_tensor(soft(), 2, hyp).unwrap(),
            0.5,
        )
        .unwrap();
        for i in 0..3 {
            assert!(c.get(i, i) > lo[i] && c.get(i, i) < hi[i]);
        }
        assert!((c.get(0, 0) - c.get(1, 1)).abs() < 1e-8 * c.get(0, 0));
    }

    #[test]
    fn three_d_layers_agree_with_two_d_plane_strain() {
        let rve3 = RveImage::from_fn(vec![2, 6, 2], |ijk| ijk[1] < 2);
        let rve2 = RveImage::from_fn(vec![2, 6], |ijk| ijk[1] < 2);
        let c3 = homogenize_fe(&rve3, steel(), soft(), Hypothesis::ThreeD).unwrap();
        let c2 = homogenize_fe(&rve2, steel(), soft(), Hypothesis::PlaneStrain).unwrap();
        let red = super::super::reduce_to_plane(&c3, Hypothesis::PlaneStrain).unwrap();
        assert!(red.relative_difference(&c2) < 1e-8);
    }

    #[test]
    fn too_small_cell_rejected() {
        let rve = RveImage::uniform(vec![1, 4], true);
        assert!(homogenize_fe(&rve, steel(), soft(), Hypothesis::PlaneStress).is_err());
    }
}
