use super::levelset::{density_from_levelset, element_average, heaviside, smoothed_delta, ErsatzParams, FilterMatrix};
use super::mesh::MacroMesh;
use super::redistance::redistance;
use super::solve::{assemble_solve, LayoutAssignment, StiffnessLibrary};
use crate::error::{Error, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub strain_energy: f64,
    pub mass: f64,
    pub perimeter: f64,
    pub regularization: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            strain_energy: 0.9,
            mass: 0.0,
            perimeter: 0.025,
            regularization: 0.5,
        }
    }
}

/// Everything needed to evaluate a design except the microstructure layout.
#[derive(Debug, Clone)]
pub struct MacroProblem {
    pub mesh: MacroMesh,
    pub filter: FilterMatrix,
    pub filter_radius: f64,
    pub ersatz: ErsatzParams,
    pub weights: ObjectiveWeights,
    /// Required mass fraction γ.
    pub mass_limit: f64,
    /// Box bounds of the design values (element sizes); also the truncation
    /// of the redistanced field.
    pub bounds: [f64; 2],
    /// Strain energy normalizer Ψ₀.
    pub psi0: f64,
}

impl MacroProblem {
    pub fn new(mesh: MacroMesh, filter_radius: f64) -> Result<Self> {
        mesh.validate()?;
        let filter = FilterMatrix::for_mesh(&mesh, filter_radius)?;
        Ok(Self {
            mesh,
            filter,
            filter_radius,
            ersatz: ErsatzParams::default(),
            weights: ObjectiveWeights::default(),
            mass_limit: 0.4,
            bounds: [-1.5, 1.5],
            psi0: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.ersatz.validate()?;
        let w = &self.weights;
        if [w.strain_energy, w.mass, w.perimeter, w.regularization].iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Parameter(format!("objective weights must be ≥ 0: {w:?}")));
        }
        if !(self.bounds[0] < self.bounds[1]) || !self.bounds.iter().all(|b| b.is_finite()) {
            return Err(Error::Parameter(format!("design bounds {:?} are invalid", self.bounds)));
        }
        if !(self.psi0 > 0.0) {
            return Err(Error::Parameter(format!("strain energy normalizer {} must be positive", self.psi0)));
        }
        Ok(())
    }

    pub fn design_size(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for t in theta {
            *t = t.clamp(self.bounds[0], self.bounds[1]);
        }
    }
}

/// 2×2 Gauss points on the unit cell.
pub(crate) const GAUSS: [[f64; 2]; 4] = {
    const A: f64 = 0.211_324_865_405_187_1;
    const B: f64 = 0.788_675_134_594_812_9;
    [[A, A], [B, A], [A, B], [B, B]]
};

/// Shape values and grid-unit gradients of the bilinear cell at (ξ, η).
#[inline]
pub(crate) fn shape(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let n = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), (1.0 - xi) * eta, xi * eta];
    let g = [[-(1.0 - eta), -(1.0 - xi)], [1.0 - eta, -xi], [-eta, 1.0 - xi], [eta, xi]];
    (n, g)
}

/// Guard for |∇φ| where the field is flat.
pub(crate) const GRAD_FLOOR: f64 = 1e-12;

/// Smoothed interface length ∫ δ_ε(φ)|∇φ| dx over the boundary length.
pub fn perimeter_penalty(problem: &MacroProblem, filtered: &[f64]) -> f64 {
    let mesh = &problem.mesh;
    let eps = problem.ersatz.smoothing_width;
    let mut acc = 0.0;
    for e in 0..mesh.element_count() {
        let nodes = mesh.element_nodes(e);
        let v = nodes.map(|n| filtered[n]);
        for [xi, eta] in GAUSS {
            let (n, g) = shape(xi, eta);
            let phi: f64 = (0..4).map(|a| n[a] * v[a]).sum();
            let d = smoothed_delta(phi, eps);
            if d == 0.0 {
                continue;
            }
            let gx: f64 = (0..4).map(|a| g[a][0] * v[a]).sum();
            let gy: f64 = (0..4).map(|a| g[a][1] * v[a]).sum();
            acc += 0.25 * d * (gx * gx + gy * gy + GRAD_FLOOR * GRAD_FLOOR).sqrt();
        }
    }
    // Grid units: dx = h² and |∇φ| = |∇_grid φ| / h.
    acc * mesh.h / mesh.boundary_length()
}

/// Two-term level-set regularization against the frozen redistanced target.
pub fn regularization_penalty(problem: &MacroProblem, filtered: &[f64], target: &[f64]) -> f64 {
    let mesh = &problem.mesh;
    let range2 = (problem.bounds[1] - problem.bounds[0]).powi(2);
    let mut value = 0.0;
    let mut grad = 0.0;
    for e in 0..mesh.element_count() {
        let nodes = mesh.element_nodes(e);
        let d = nodes.map(|n| filtered[n] - target[n]);
        for [xi, eta] in GAUSS {
            let (n, g) = shape(xi, eta);
            let dv: f64 = (0..4).map(|a| n[a] * d[a]).sum();
            let gx: f64 = (0..4).map(|a| g[a][0] * d[a]).sum();
            let gy: f64 = (0..4).map(|a| g[a][1] * d[a]).sum();
            value += 0.25 * dv * dv;
            grad += 0.25 * (gx * gx + gy * gy);
        }
    }
    let ne = mesh.element_count() as f64;
    let w = 1.0 / mesh.boundary_length();
    w * value / (range2 * ne) + w * grad / ne
}

/// Design-dependent, layout-independent quantities of one θ.
#[derive(Debug, Clone)]
pub struct DesignFields {
    pub filtered: Vec<f64>,
    /// Element material indicator H_ε(−φ̄_e), without the void floor.
    pub indicator: Vec<f64>,
    pub density: Vec<f64>,
    /// Truncated signed distance to the current interface, frozen for
    /// differentiation.
    pub target: Vec<f64>,
    pub mass_ratio: f64,
    pub perimeter: f64,
    pub regularization: f64,
}

impl DesignFields {
    pub fn new(problem: &MacroProblem, theta: &[f64]) -> Result<Self> {
        if theta.len() != problem.design_size() {
            return Err(Error::Parameter(format!(
                "design has {} values for {} nodes",
                theta.len(),
                problem.design_size()
            )));
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::Numerical(format!("design value {i} is not finite")));
        }
        let mesh = &problem.mesh;
        let filtered = problem.filter.apply(theta);
        let eps = problem.ersatz.smoothing_width;
        let indicator: Vec<f64> = element_average(mesh, &filtered).iter().map(|&p| heaviside(-p, eps)).collect();
        let density = density_from_levelset(mesh, &filtered, &problem.ersatz);
        let target = redistance(&filtered, mesh, problem.bounds);
        let mass_ratio = indicator.iter().sum::<f64>() / mesh.element_count() as f64;
        let perimeter = perimeter_penalty(problem, &filtered);
        let regularization = regularization_penalty(problem, &filtered, &target);
        Ok(Self {
            filtered,
            indicator,
            density,
            target,
            mass_ratio,
            perimeter,
            regularization,
        })
    }

    pub fn constraint(&self, problem: &MacroProblem) -> f64 {
        self.mass_ratio - problem.mass_limit
    }

    /// Objective without the strain energy term.
    pub fn geometric_objective(&self, problem: &MacroProblem) -> f64 {
        let w = &problem.weights;
        w.mass * self.mass_ratio + w.perimeter * self.perimeter + w.regularization * self.regularization
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Ψ = Fᵀu
    pub strain_energy: f64,
    pub mass_ratio: f64,
    pub perimeter: f64,
    pub regularization: f64,
    pub objective: f64,
    /// Mass constraint value g = mass_ratio − γ (≤ 0 is feasible).
    pub constraint: f64,
    pub displacement: Vec<f64>,
}

pub fn evaluate_fields(
    problem: &MacroProblem,
    fields: &DesignFields,
    lib: &StiffnessLibrary,
    layout: &LayoutAssignment,
) -> Result<EvalResult> {
    let u = assemble_solve(&problem.mesh, &fields.density, layout, lib)?;
    let psi = dot(&problem.mesh.load_vector(), &u);
    Ok(EvalResult {
        strain_energy: psi,
        mass_ratio: fields.mass_ratio,
        perimeter: fields.perimeter,
        regularization: fields.regularization,
        objective: problem.weights.strain_energy * psi / problem.psi0 + fields.geometric_objective(problem),
        constraint: fields.constraint(problem),
        displacement: u,
    })
}

pub fn evaluate(
    problem: &MacroProblem,
    lib: &StiffnessLibrary,
    theta: &[f64],
    layout: &LayoutAssignment,
) -> Result<EvalResult> {
    evaluate_fields(problem, &DesignFields::new(problem, theta)?, lib, layout)
}
