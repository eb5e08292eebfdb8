use crate::macro_model::{
    element_average, element_energy, shape, smoothed_delta, DesignFields, LayoutAssignment, MacroProblem,
    StiffnessLibrary, GAUSS, GRAD_FLOOR,
};

/// Spreads per-element derivatives with respect to the element average of φ̄
/// onto the nodes and pulls them back through the filter.
fn element_to_theta(problem: &MacroProblem, d_avg: &[f64]) -> Vec<f64> {
    let mesh = &problem.mesh;
    let mut nodal = vec![0.0; mesh.node_count()];
    for (e, &d) in d_avg.iter().enumerate() {
        if d != 0.0 {
            for n in mesh.element_nodes(e) {
                nodal[n] += 0.25 * d;
            }
        }
    }
    problem.filter.apply_transpose(&nodal)
}

/// dΨ/dθ for the displacement `u` solved with this layout. Compliance is
/// self-adjoint, so dΨ/dρ_e = −u_eᵀ k(C_e) u_e.
pub fn grad_strain_energy(
    problem: &MacroProblem,
    fields: &DesignFields,
    lib: &StiffnessLibrary,
    layout: &LayoutAssignment,
    u: &[f64],
) -> Vec<f64> {
    let mesh = &problem.mesh;
    let eps = problem.ersatz.smoothing_width;
    let scale = 1.0 - problem.ersatz.void_factor;
    let avg = element_average(mesh, &fields.filtered);
    let d_avg: Vec<f64> = (0..mesh.element_count())
        .map(|e| {
            let d = smoothed_delta(avg[e], eps);
            if d == 0.0 {
                return 0.0;
            }
            let energy = element_energy(&lib.matrices[layout.entries[e]], u, &mesh.element_dofs(e));
            // ρ = ρ_min + (1 − ρ_min) H(−p) ⇒ dρ/dp = −(1 − ρ_min) δ(p)
            energy * scale * d
        })
        .collect();
    element_to_theta(problem, &d_avg)
}

pub fn grad_mass(problem: &MacroProblem, fields: &DesignFields) -> Vec<f64> {
    let mesh = &problem.mesh;
    let eps = problem.ersatz.smoothing_width;
    let ne = mesh.element_count() as f64;
    let d_avg: Vec<f64> = element_average(mesh, &fields.filtered)
        .into_iter()
        .map(|p| -smoothed_delta(p, eps) / ne)
        .collect();
    element_to_theta(problem, &d_avg)
}

fn delta_prime(s: f64, eps: f64) -> f64 {
    if s.abs() >= eps {
        0.0
    } else {
        -1.5 * s / (eps * eps * eps)
    }
}

pub fn grad_perimeter(problem: &MacroProblem, fields: &DesignFields) -> Vec<f64> {
    let mesh = &problem.mesh;
    let eps = problem.ersatz.smoothing_width;
    let phi = &fields.filtered;
    let mut nodal = vec![0.0; mesh.node_count()];
    let scale = mesh.h / mesh.boundary_length();
    for e in 0..mesh.element_count() {
        let nodes = mesh.element_nodes(e);
        let v = nodes.map(|n| phi[n]);
        for [xi, eta] in GAUSS {
            let (n, g) = shape(xi, eta);
            let p: f64 = (0..4).map(|a| n[a] * v[a]).sum();
            if p.abs() >= eps {
                continue;
            }
            let gx: f64 = (0..4).map(|a| g[a][0] * v[a]).sum();
            let gy: f64 = (0..4).map(|a| g[a][1] * v[a]).sum();
            let norm = (gx * gx + gy * gy + GRAD_FLOOR * GRAD_FLOOR).sqrt();
            let d = smoothed_delta(p, eps);
            let dp = delta_prime(p, eps);
            for a in 0..4 {
                let dnorm = (gx * g[a][0] + gy * g[a][1]) / norm;
                nodal[nodes[a]] += 0.25 * scale * (dp * n[a] * norm + d * dnorm);
            }
        }
    }
    problem.filter.apply_transpose(&nodal)
}

/// Gradient of the regularization with the redistanced target held fixed.
pub fn grad_reg(problem: &MacroProblem, fields: &DesignFields) -> Vec<f64> {
    let mesh = &problem.mesh;
    let range2 = (problem.bounds[1] - problem.bounds[0]).powi(2);
    let ne = mesh.element_count() as f64;
    let w = 1.0 / mesh.boundary_length();
    let mut nodal = vec![0.0; mesh.node_count()];
    for e in 0..mesh.element_count() {
        let nodes = mesh.element_nodes(e);
        let d = nodes.map(|n| fields.filtered[n] - fields.target[n]);
        for [xi, eta] in GAUSS {
            let (n, g) = shape(xi, eta);
            let dv: f64 = (0..4).map(|a| n[a] * d[a]).sum();
            let gx: f64 = (0..4).map(|a| g[a][0] * d[a]).sum();
            let gy: f64 = (0..4).map(|a| g[a][1] * d[a]).sum();
            for a in 0..4 {
                let t = 2.0 * dv * n[a] / range2 + 2.0 * (gx * g[a][0] + gy * g[a][1]);
                nodal[nodes[a]] += 0.25 * w * t / ne;
            }
        }
    }
    problem.filter.apply_transpose(&nodal)
}

/// Layout-independent gradients of one design.
#[derive(Debug, Clone)]
pub struct GeometricGradients {
    pub mass: Vec<f64>,
    pub perimeter: Vec<f64>,
    pub regularization: Vec<f64>,
}

impl GeometricGradients {
    pub fn new(problem: &MacroProblem, fields: &DesignFields) -> Self {
        Self {
            mass: grad_mass(problem, fields),
            perimeter: grad_perimeter(problem, fields),
            regularization: grad_reg(problem, fields),
        }
    }
}

/// Gradient of the objective terms other than the strain energy.
pub fn geometric_objective_gradient(problem: &MacroProblem, g: &GeometricGradients) -> Vec<f64> {
    let w = &problem.weights;
    (0..g.mass.len())
        .map(|i| w.mass * g.mass[i] + w.perimeter * g.perimeter[i] + w.regularization * g.regularization[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogenization::{isotropic_tensor, Hypothesis, IsotropicPhase, MicrostructureCatalog};
    use crate::macro_model::{perimeter_penalty, regularization_penalty, MacroMesh};
    use crate::sensitivity::fd_check;
    use rand::Rng;

    fn setup() -> (MacroProblem, StiffnessLibrary, LayoutAssignment, Vec<f64>) {
        let mesh = MacroMesh::half_beam(30, 10, 3.0, 1.0, 1.0).unwrap();
        let p = MacroProblem::new(mesh, 0.16).unwrap();
        let entries: Vec<_> = [1.0, 2.5, 7.0]
            .iter()
            .map(|&e| isotropic_tensor(IsotropicPhase::new(e, 0.3), 2, Hypothesis::PlaneStress).unwrap())
            .collect();
        let lib = StiffnessLibrary::new(&MicrostructureCatalog::from_entries(entries, "t").unwrap()).unwrap();
        let mut rng = crate::rng::RandomStream::new(77, 0).rng();
        let layout = LayoutAssignment {
            entries: (0..300).map(|_| rng.random_range(0..3)).collect(),
        };
        let theta: Vec<f64> = (0..p.design_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        (p, lib, layout, theta)
    }

    fn components() -> Vec<usize> {
        (0..20).map(|k| (k * 97 + 13) % 341).collect()
    }

    #[test]
    fn strain_energy_gradient_matches_fd() {
        let (p, lib, lay, theta) = setup();
        let fields = DesignFields::new(&p, &theta).unwrap();
        let u = crate::macro_model::assemble_solve(&p.mesh, &fields.density, &lay, &lib).unwrap();
        let g = grad_strain_energy(&p, &fields, &lib, &lay, &u);
        let f = |t: &[f64]| crate::macro_model::evaluate(&p, &lib, t, &lay).map(|r| r.strain_energy);
        let r = fd_check(f, &g, &theta, &components(), 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn mass_gradient_matches_fd() {
        let (p, _, _, theta) = setup();
        let g = grad_mass(&p, &DesignFields::new(&p, &theta).unwrap());
        let f = |t: &[f64]| DesignFields::new(&p, t).map(|d| d.mass_ratio);
        let r = fd_check(f, &g, &theta, &components(), 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-5, "{r:?}");
    }

    #[test]
    fn perimeter_gradient_matches_fd() {
        let (p, _, _, theta) = setup();
        let g = grad_perimeter(&p, &DesignFields::new(&p, &theta).unwrap());
        let f = |t: &[f64]| Ok(perimeter_penalty(&p, &p.filter.apply(t)));
        let r = fd_check(f, &g, &theta, &components(), 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-3, "{r:?}");
    }

    #[test]
    fn regularization_gradient_matches_fd_with_frozen_target() {
        let (p, _, _, theta) = setup();
        let fields = DesignFields::new(&p, &theta).unwrap();
        let g = grad_reg(&p, &fields);
        let target = fields.target.clone();
        let f = |t: &[f64]| Ok(regularization_penalty(&p, &p.filter.apply(t), &target));
        let r = fd_check(f, &g, &theta, &components(), 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-3, "{r:?}");
    }

    #[test]
    fn deep_solid_design_has_no_mass_gradient() {
        let (p, _, _, _) = setup();
        let theta = vec![-1.5; p.design_size()];
        // Filtered values sit at −1.5 = −ε, where the delta vanishes.
        assert!(grad_mass(&p, &DesignFields::new(&p, &theta).unwrap()).iter().all(|&g| g.abs() < 1e-12));
    }
}
