use super::gradients::{geometric_objective_gradient, grad_strain_energy, GeometricGradients};
use crate::error::{Error, Result};
use crate::macro_model::{evaluate_fields, DesignFields, LayoutAssignment, MacroProblem, StiffnessLibrary};
use crate::par::Exec;

/// Values and gradients of one layout realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSample {
    pub objective: f64,
    pub strain_energy: f64,
    pub constraints: Vec<f64>,
    pub d_objective: Vec<f64>,
    pub d_constraints: Vec<Vec<f64>>,
}

/// Mini-batch means over the layouts of one iteration, plus the per-layout
/// samples they were formed from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub d_objective: Vec<f64>,
    pub d_constraints: Vec<Vec<f64>>,
    pub samples: Vec<LayoutSample>,
}

pub fn layout_sample(
    problem: &MacroProblem,
    fields: &DesignFields,
    geo: &GeometricGradients,
    lib: &StiffnessLibrary,
    layout: &LayoutAssignment,
) -> Result<LayoutSample> {
    let r = evaluate_fields(problem, fields, lib, layout)?;
    let d_psi = grad_strain_energy(problem, fields, lib, layout, &r.displacement);
    let scale = problem.weights.strain_energy / problem.psi0;
    let d_geo = geometric_objective_gradient(problem, geo);
    let d_objective = d_psi.iter().zip(&d_geo).map(|(a, b)| scale * a + b).collect();
    Ok(LayoutSample {
        objective: r.objective,
        strain_energy: r.strain_energy,
        constraints: vec![r.constraint],
        d_objective,
        d_constraints: vec![geo.mass.clone()],
    })
}

/// Arithmetic mean in input order: ((x₀ + x₁) + x₂) + … then divided by n.
fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.fold(0.0, |acc, v| acc + v) / n as f64
}

fn mean_vec<'a>(vectors: impl Iterator<Item = &'a Vec<f64>>, len: usize, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    acc
}

/// Evaluates every layout (concurrently under `exec`) and averages values and
/// gradients sequentially in layout order.
pub fn stochastic_gradient_bundle(
    problem: &MacroProblem,
    lib: &StiffnessLibrary,
    theta: &[f64],
    layouts: &[LayoutAssignment],
    exec: Exec,
) -> Result<GradientBundle> {
    if layouts.is_empty() {
        return Err(Error::Parameter("a gradient bundle needs at least one layout".into()));
    }
    let fields = DesignFields::new(problem, theta)?;
    let geo = GeometricGradients::new(problem, &fields);
    let samples = exec.try_map(layouts.len(), |i| {
        layout_sample(problem, &fields, &geo, lib, &layouts[i]).map_err(|e| e.in_layout(i))
    })?;
    let n = samples.len();
    let len = theta.len();
    let nc = samples[0].constraints.len();
    Ok(GradientBundle {
        objective: mean(samples.iter().map(|s| s.objective), n),
        constraints: (0..nc).map(|j| mean(samples.iter().map(|s| s.constraints[j]), n)).collect(),
        d_objective: mean_vec(samples.iter().map(|s| &s.d_objective), len, n),
        d_constraints: (0..nc).map(|j| mean_vec(samples.iter().map(|s| &s.d_constraints[j]), len, n)).collect(),
        samples,
    })
}
