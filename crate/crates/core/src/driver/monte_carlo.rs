use crate::error::{Error, Result};
use crate::macro_model::{evaluate_fields, DesignFields, LayoutAssignment, MacroProblem, StiffnessLibrary};
use crate::par::Exec;
use crate::rng::{Purpose, RandomStream};

use super::sampling::sample_layouts;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistic {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 for one sample).
    pub std: f64,
    /// std / √n
    pub standard_error: f64,
}

impl Statistic {
    /// Sums run sequentially in sample order, shifted by the first sample so
    /// that identical samples give exactly their value and zero spread.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                standard_error: f64::NAN,
            };
        }
        let shift = values[0];
        let offset = values.iter().fold(0.0, |a, v| a + (v - shift)) / n as f64;
        let mean = shift + offset;
        let std = if n > 1 {
            (values.iter().fold(0.0, |a, v| a + (v - shift - offset).powi(2)) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            standard_error: std / (n as f64).sqrt(),
        }
    }

    /// Whether `x` lies within mean ± k·SE.
    pub fn covers(&self, x: f64, k: f64) -> bool {
        (x - self.mean).abs() <= k * self.standard_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    pub objective: f64,
    pub strain_energy: f64,
    pub constraints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub samples: usize,
    pub objective: Statistic,
    pub strain_energy: Statistic,
    pub constraints: Vec<Statistic>,
    /// Mean of Σ_j (g_j⁺)².
    pub violation: f64,
    pub mass_ratio: f64,
    pub raw: Vec<McSample>,
}

impl McReport {
    fn from_samples(raw: Vec<McSample>, mass_ratio: f64) -> Self {
        let pick = |f: &dyn Fn(&McSample) -> f64| raw.iter().map(f).collect::<Vec<_>>();
        let nc = raw.first().map_or(0, |s| s.constraints.len());
        let violation = Statistic::of(&pick(&|s| s.constraints.iter().map(|g| g.max(0.0).powi(2)).sum())).mean;
        Self {
            samples: raw.len(),
            objective: Statistic::of(&pick(&|s| s.objective)),
            strain_energy: Statistic::of(&pick(&|s| s.strain_energy)),
            constraints: (0..nc).map(|j| Statistic::of(&pick(&|s| s.constraints[j]))).collect(),
            violation,
            mass_ratio,
            raw,
        }
    }

    /// Plain-text report.
    pub fn to_text(&self) -> String {
        let line = |name: &str, s: &Statistic| format!("{name} mean={} std={} se={}\n", s.mean, s.std, s.standard_error);
        let mut out = format!("samples {}\nmass_ratio {}\n", self.samples, self.mass_ratio);
        out += &line("objective", &self.objective);
        out += &line("strain_energy", &self.strain_energy);
        for (j, c) in self.constraints.iter().enumerate() {
            out += &line(&format!("constraint_{}", j + 1), c);
        }
        out += &format!("violation {}\n", self.violation);
        out
    }
}

/// Evaluates the design on the given layouts (concurrently under `exec`)
/// and aggregates in layout order.
pub fn evaluate_layouts(
    problem: &MacroProblem,
    lib: &StiffnessLibrary,
    theta: &[f64],
    layouts: &[LayoutAssignment],
    exec: Exec,
) -> Result<McReport> {
    if layouts.is_empty() {
        return Err(Error::Parameter("Monte Carlo evaluation needs at least one layout".into()));
    }
    let fields = DesignFields::new(problem, theta)?;
    let raw = exec.try_map(layouts.len(), |i| sample(problem, &fields, lib, &layouts[i], i))?;
    Ok(McReport::from_samples(raw, fields.mass_ratio))
}

fn sample(
    problem: &MacroProblem,
    fields: &DesignFields,
    lib: &StiffnessLibrary,
    layout: &LayoutAssignment,
    index: usize,
) -> Result<McSample> {
    let r = evaluate_fields(problem, fields, lib, layout).map_err(|e| e.in_layout(index))?;
    Ok(McSample {
        objective: r.objective,
        strain_energy: r.strain_energy,
        constraints: vec![r.constraint],
    })
}

/// Monte Carlo estimate over `count` fresh layouts; layout i is drawn from
/// `stream.child(MonteCarlo, i)` so the result does not depend on how the
/// work is scheduled.
pub fn monte_carlo_evaluate(
    problem: &MacroProblem,
    lib: &StiffnessLibrary,
    theta: &[f64],
    count: usize,
    stream: RandomStream,
    exec: Exec,
) -> Result<McReport> {
    if count == 0 {
        return Err(Error::Parameter("Monte Carlo evaluation needs at least one layout".into()));
    }
    let fields = DesignFields::new(problem, theta)?;
    let elements = problem.mesh.element_count();
    let raw = exec.try_map(count, |i| {
        let layout = sample_layouts(lib.len(), elements, 1, stream.child(Purpose::MonteCarlo, i as u64))?
            .pop()
            .expect("one layout");
        sample(problem, &fields, lib, &layout, i)
    })?;
    Ok(McReport::from_samples(raw, fields.mass_ratio))
}
