//! Level-set design variables, the linear nodal filter and the smoothed
//! Heaviside map to ersatz densities.
//!
//! Sign convention: φ > 0 is void, φ < 0 is solid. Design values are measured
//! in element sizes, so bounds and smoothing widths are mesh independent.

use super::mesh::MacroMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErsatzParams {
    /// Half-width of the smoothed Heaviside, in element sizes.
    pub smoothing_width: f64,
    /// Stiffness floor of void.
    pub void_factor: f64,
}

impl Default for ErsatzParams {
    fn default() -> Self {
        Self {
            smoothing_width: 1.5,
            void_factor: 1e-6,
        }
    }
}

impl ErsatzParams {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_width > 0.0 && self.void_factor > 0.0 && self.void_factor < 1.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid ersatz parameters {self:?}")))
        }
    }
}

/// C¹ smoothed Heaviside: ½ + 3s/(4ε) − s³/(4ε³) on |s| ≤ ε.
pub fn heaviside(s: f64, eps: f64) -> f64 {
    if s <= -eps {
        0.0
    } else if s >= eps {
        1.0
    } else {
        let t = s / eps;
        0.5 + 0.75 * t - 0.25 * t * t * t
    }
}

/// Derivative of [`heaviside`] with respect to `s`.
pub fn smoothed_delta(s: f64, eps: f64) -> f64 {
    if s.abs() >= eps {
        0.0
    } else {
        let t = s / eps;
        0.75 * (1.0 - t * t) / eps
    }
}

/// Row-normalized cone filter φ̄ = W θ on a node grid, with
/// w_ij = max(0, r − |x_i − x_j|).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl FilterMatrix {
    pub fn new(nodes_x: usize, nodes_y: usize, spacing: f64, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !(spacing > 0.0) {
            return Err(Error::Parameter(format!("filter radius {radius} must be ≥ 0")));
        }
        let reach = (radius / spacing).floor() as isize + 1;
        let n = nodes_x * nodes_y;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        for j in 0..nodes_y as isize {
            for i in 0..nodes_x as isize {
                let start = weights.len();
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let (ii, jj) = (i + di, j + dj);
                        if ii < 0 || jj < 0 || ii >= nodes_x as isize || jj >= nodes_y as isize {
                            continue;
                        }
                        let d = spacing * ((di * di + dj * dj) as f64).sqrt();
                        let w = radius - d;
                        if w > 0.0 {
                            cols.push(ii as usize + nodes_x * jj as usize);
                            weights.push(w);
                        }
                    }
                }
                if weights.len() == start {
                    // Radius zero: identity row.
                    cols.push(i as usize + nodes_x * j as usize);
                    weights.push(1.0);
                }
                let sum: f64 = weights[start..].iter().sum();
                for w in &mut weights[start..] {
                    *w /= sum;
                }
                row_ptr.push(weights.len());
            }
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            weights,
        })
    }

    pub fn for_mesh(mesh: &MacroMesh, radius: f64) -> Result<Self> {
        Self::new(mesh.nodes_x(), mesh.nodes_y(), mesh.h, radius)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.weights[k] * theta[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// Wᵀ g: pulls a gradient with respect to φ̄ back to θ.
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[k]] += self.weights[k] * g[i];
            }
        }
        out
    }
}

/// Nodal average per element.
pub fn element_average(mesh: &MacroMesh, nodal: &[f64]) -> Vec<f64> {
    (0..mesh.element_count())
        .map(|e| mesh.element_nodes(e).iter().map(|&n| nodal[n]).sum::<f64>() * 0.25)
        .collect()
}

/// Material indicator H_ε(−φ̄_e) per element, without the void floor.
pub fn material_indicator(mesh: &MacroMesh, filtered: &[f64], ersatz: &ErsatzParams) -> Vec<f64> {
    element_average(mesh, filtered)
        .into_iter()
        .map(|p| heaviside(-p, ersatz.smoothing_width))
        .collect()
}

/// Ersatz stiffness density ρ_e = ρ_min + (1 − ρ_min) H_ε(−φ̄_e).
pub fn density_from_levelset(mesh: &MacroMesh, filtered: &[f64], ersatz: &ErsatzParams) -> Vec<f64> {
    material_indicator(mesh, filtered, ersatz)
        .into_iter()
        .map(|m| ersatz.void_factor + (1.0 - ersatz.void_factor) * m)
        .collect()
}

/// Superellipse hole seeding evaluated at the nodes: the maximum over a
/// `holes_x × holes_y` grid of hole centers of 1 − (x/r)¹⁰ − (y/r)¹⁰ in hole
/// coordinates. Positive inside the holes (void).
pub fn seed_holes(mesh: &MacroMesh, holes_x: usize, holes_y: usize, r_hole: f64) -> Result<Vec<f64>> {
    if holes_x == 0 || holes_y == 0 || !(r_hole > 0.0) {
        return Err(Error::Parameter(format!(
            "hole grid {holes_x}×{holes_y} with radius {r_hole} is invalid"
        )));
    }
    let (lx, ly) = (mesh.nx as f64 * mesh.h, mesh.ny as f64 * mesh.h);
    let (px, py) = (lx / holes_x as f64, ly / holes_y as f64);
    Ok((0..mesh.node_count())
        .map(|n| {
            let [x, y] = mesh.node_position(n);
            // Only the nearest center can win the max.
            let ci = ((x / px - 0.5).round().clamp(0.0, holes_x as f64 - 1.0)) * px + 0.5 * px;
            let cj = ((y / py - 0.5).round().clamp(0.0, holes_y as f64 - 1.0)) * py + 0.5 * py;
            1.0 - ((x - ci) / r_hole).powi(10) - ((y - cj) / r_hole).powi(10)
        })
        .collect())
}

/// Converts a physical level-set field to design units (element sizes) and
/// clamps it to the design bounds.
pub fn to_design_units(physical: &[f64], h: f64, bounds: [f64; 2]) -> Vec<f64> {
    physical.iter().map(|&p| (p / h).clamp(bounds[0], bounds[1])).collect()
}
