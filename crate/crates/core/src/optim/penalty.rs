use crate::error::{Error, Result};

/// Penalty weights κ_j ≥ 0 on the squared constraint violations.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kappa: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if let Some(k) = kappa.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(Error::Parameter(format!("penalty weight {k} must be finite and ≥ 0")));
        }
        Ok(Self { kappa })
    }
}

/// Batch mean of Σ_j κ_j (g_j⁺)², the penalty part of the merit function.
pub fn penalty_value(constraints: &[Vec<f64>], penalty: &PenaltySpec) -> f64 {
    let n = constraints.len().max(1) as f64;
    constraints
        .iter()
        .map(|g| g.iter().zip(&penalty.kappa).map(|(g, k)| k * g.max(0.0).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n
}

/// Batch mean of Σ_j (g_j⁺)², unweighted.
pub fn squared_violation(constraints: &[Vec<f64>]) -> f64 {
    let n = constraints.len().max(1) as f64;
    constraints.iter().map(|g| g.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>()).sum::<f64>() / n
}

/// h = ∇R̂ + Σ_j κ_j · mean_s(2 g_sj⁺ ∇g_sj).
///
/// `constraints[s][j]` and `d_constraints[s][j]` hold sample s of constraint j.
pub fn penalty_descent_direction(
    d_objective: &[f64],
    constraints: &[Vec<f64>],
    d_constraints: &[Vec<Vec<f64>>],
    penalty: &PenaltySpec,
) -> Result<Vec<f64>> {
    let n = d_objective.len();
    if constraints.len() != d_constraints.len() {
        return Err(Error::Parameter(format!(
            "{} constraint samples but {} gradient samples",
            constraints.len(),
            d_constraints.len()
        )));
    }
    let mut h = d_objective.to_vec();
    if constraints.is_empty() {
        return Ok(h);
    }
    let samples = constraints.len() as f64;
    for (g, dg) in constraints.iter().zip(d_constraints) {
        if g.len() != penalty.kappa.len() || dg.len() != g.len() {
            return Err(Error::Parameter(format!(
                "{} constraints, {} gradients, {} penalty weights",
                g.len(),
                dg.len(),
                penalty.kappa.len()
            )));
        }
        for ((&gj, grad), &k) in g.iter().zip(dg).zip(&penalty.kappa) {
            if grad.len() != n {
                return Err(Error::Parameter(format!("constraint gradient has {} entries, expected {n}", grad.len())));
            }
            let w = 2.0 * k * gj.max(0.0) / samples;
            if w == 0.0 {
                continue;
            }
            for (hi, gi) in h.iter_mut().zip(grad) {
                *hi += w * gi;
            }
        }
    }
    Ok(h)
}
