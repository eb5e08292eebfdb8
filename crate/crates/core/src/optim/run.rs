use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, sgd_step, AdamState};
use super::gcmma::{gcmma_step, GcmmaParams, GcmmaState};
use super::penalty::{penalty_descent_direction, PenaltySpec};
use crate::driver::sample_layouts;
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::macro_model::{evaluate_fields, DesignFields, MacroProblem, StiffnessLibrary};
use crate::par::Exec;
use crate::rng::{Purpose, RandomStream};
use crate::sensitivity::stochastic_gradient_bundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Gcmma,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Gcmma => "gcmma",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// Learning rate of SGD and Adam.
    pub eta: f64,
    pub penalty: PenaltySpec,
    /// Layouts drawn per iteration.
    pub batch: usize,
    pub iterations: usize,
    pub beta_m: f64,
    pub beta_v: f64,
    pub epsilon: f64,
    pub gcmma: GcmmaParams,
    /// Stop once the moving average of the objective over `window`
    /// iterations changes by less than `tolerance` (relative) between
    /// consecutive windows.
    pub early_stop: Option<EarlyStop>,
    /// Log wall-clock milliseconds per iteration; off by default so that
    /// histories are reproducible byte for byte.
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub window: usize,
    pub tolerance: f64,
}

impl OptimizerSpec {
    pub fn adam(eta: f64, kappa: f64, batch: usize, iterations: usize) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            eta,
            penalty: PenaltySpec { kappa: vec![kappa] },
            batch,
            iterations,
            beta_m: 0.9,
            beta_v: 0.999,
            epsilon: 1e-8,
            gcmma: GcmmaParams::default(),
            early_stop: None,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Parameter("at least one layout per iteration is required".into()));
        }
        PenaltySpec::new(self.penalty.kappa.clone())?;
        if self.kind != OptimizerKind::Gcmma && !(self.eta > 0.0) {
            return Err(Error::Parameter(format!("step size {} must be positive", self.eta)));
        }
        if let Some(e) = self.early_stop {
            if e.window == 0 || !(e.tolerance >= 0.0) {
                return Err(Error::Parameter(format!("invalid early stop rule {e:?}")));
            }
        }
        self.gcmma.validate()
    }

    pub fn initial_state(&self, theta: &[f64], bounds: [f64; 2]) -> Result<OptimizerState> {
        Ok(match self.kind {
            OptimizerKind::Sgd => OptimizerState::Sgd { eta: self.eta },
            OptimizerKind::Adam => {
                let mut a = AdamState::new(theta.len(), self.eta);
                a.beta_m = self.beta_m;
                a.beta_v = self.beta_v;
                a.epsilon = self.epsilon;
                a.validate()?;
                OptimizerState::Adam(a)
            }
            OptimizerKind::Gcmma => OptimizerState::Gcmma(GcmmaState::new(theta, bounds, self.gcmma)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd { eta: f64 },
    Adam(AdamState),
    Gcmma(GcmmaState),
}

impl OptimizerState {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgd { .. } => OptimizerKind::Sgd,
            OptimizerState::Adam(_) => OptimizerKind::Adam,
            OptimizerState::Gcmma(_) => OptimizerKind::Gcmma,
        }
    }
}

/// Everything needed to continue a run: the current design, optimizer
/// state, Ψ₀ once calibrated and the position in the random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub theta: Vec<f64>,
    pub optimizer: OptimizerState,
    /// Iteration to run next; iteration k draws its layouts from
    /// `stream.child(Layout, k)`.
    pub next_iteration: u64,
    pub psi0: Option<f64>,
    pub stream: RandomStream,
}

impl RunState {
    pub fn new(theta: Vec<f64>, spec: &OptimizerSpec, bounds: [f64; 2], stream: RandomStream) -> Result<Self> {
        let optimizer = spec.initial_state(&theta, bounds)?;
        Ok(Self {
            theta,
            optimizer,
            next_iteration: 0,
            psi0: None,
            stream,
        })
    }

    pub fn layout_stream(&self, iteration: u64) -> RandomStream {
        self.stream.child(Purpose::Layout, iteration)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    /// Batch-mean objective R̂ at the iterate before the step.
    pub objective: f64,
    pub constraints: Vec<f64>,
    /// Batch mean of Σ (g⁺)².
    pub violation: f64,
    pub step_norm: f64,
    pub wall_ms: u64,
    pub restoration: bool,
}

pub fn history_header(constraints: usize) -> String {
    let mut h = String::from("iteration,objective");
    for j in 1..=constraints {
        h.push_str(&format!(",constraint_{j}"));
    }
    h.push_str(",step_norm,wall_ms");
    h
}

/// One CSV row; floats use the shortest representation that round-trips.
pub fn history_row(r: &IterationRecord) -> String {
    let mut s = format!("{},{}", r.iteration, r.objective);
    for c in &r.constraints {
        s.push_str(&format!(",{c}"));
    }
    s.push_str(&format!(",{},{}", r.step_norm, r.wall_ms));
    s
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: Vec<IterationRecord>,
    pub state: RunState,
    pub stopped_early: bool,
}

fn moving_average_settled(history: &[IterationRecord], rule: EarlyStop) -> bool {
    let w = rule.window;
    if history.len() < 2 * w {
        return false;
    }
    let avg = |s: &[IterationRecord]| s.iter().map(|r| r.objective).sum::<f64>() / w as f64;
    let now = avg(&history[history.len() - w..]);
    let before = avg(&history[history.len() - 2 * w..history.len() - w]);
    (now - before).abs() <= rule.tolerance * before.abs()
}

/// Mean strain energy of the design over the layouts of its first iteration.
pub fn calibrate_normalizer(
    problem: &MacroProblem,
    lib: &StiffnessLibrary,
    theta: &[f64],
    stream: RandomStream,
    batch: usize,
    exec: Exec,
) -> Result<f64> {
    let layouts = sample_layouts(lib.len(), problem.mesh.element_count(), batch, stream)?;
    let fields = DesignFields::new(problem, theta)?;
    let energies = exec.try_map(layouts.len(), |i| {
        evaluate_fields(problem, &fields, lib, &layouts[i])
            .map(|r| r.strain_energy)
            .map_err(|e| e.in_layout(i))
    })?;
    let psi0 = energies.iter().fold(0.0, |a, e| a + e) / energies.len() as f64;
    if !(psi0 > 0.0) || !psi0.is_finite() {
        return Err(Error::Numerical(format!("initial strain energy {psi0} cannot normalize the objective")));
    }
    Ok(psi0)
}

/// Runs iterations `state.next_iteration .. spec.iterations`. The observer
/// sees each record together with the state after the step (for logging
/// and checkpoints); an error from it aborts the run.
pub fn run_loop(
    problem: &mut MacroProblem,
    lib: &StiffnessLibrary,
    spec: &OptimizerSpec,
    mut state: RunState,
    exec: Exec,
    mut observer: impl FnMut(&IterationRecord, &RunState) -> Result<()>,
) -> Result<RunOutcome> {
    spec.validate()?;
    if state.optimizer.kind() != spec.kind {
        return Err(Error::Parameter(format!(
            "run state holds a {} optimizer but {} was requested",
            state.optimizer.kind(),
            spec.kind
        )));
    }
    if state.theta.len() != problem.design_size() {
        return Err(Error::Parameter(format!(
            "design of {} values for {} nodes",
            state.theta.len(),
            problem.design_size()
        )));
    }
    let psi0 = match state.psi0 {
        Some(p) => p,
        None => {
            let first = state.layout_stream(state.next_iteration);
            calibrate_normalizer(problem, lib, &state.theta, first, spec.batch, exec)?
        }
    };
    state.psi0 = Some(psi0);
    problem.psi0 = psi0;
    problem.validate()?;

    let bounds = problem.bounds;
    let mut history = Vec::new();
    let mut stopped_early = false;
    while state.next_iteration < spec.iterations as u64 {
        let k = state.next_iteration;
        let start = Instant::now();
        let wrap = |e: Error| Error::Iteration {
            iteration: k as usize,
            source: Box::new(e),
        };
        let layouts =
            sample_layouts(lib.len(), problem.mesh.element_count(), spec.batch, state.layout_stream(k)).map_err(wrap)?;
        let bundle = stochastic_gradient_bundle(problem, lib, &state.theta, &layouts, exec).map_err(wrap)?;
        let sample_constraints: Vec<Vec<f64>> = bundle.samples.iter().map(|s| s.constraints.clone()).collect();
        let violation = super::penalty::squared_violation(&sample_constraints);
        let mut restoration = false;
        let next = match &mut state.optimizer {
            OptimizerState::Sgd { eta } => {
                let d: Vec<Vec<Vec<f64>>> = bundle.samples.iter().map(|s| s.d_constraints.clone()).collect();
                let h = penalty_descent_direction(&bundle.d_objective, &sample_constraints, &d, &spec.penalty)
                    .map_err(wrap)?;
                sgd_step(*eta, &state.theta, &h, bounds).map_err(wrap)?
            }
            OptimizerState::Adam(adam) => {
                let d: Vec<Vec<Vec<f64>>> = bundle.samples.iter().map(|s| s.d_constraints.clone()).collect();
                let h = penalty_descent_direction(&bundle.d_objective, &sample_constraints, &d, &spec.penalty)
                    .map_err(wrap)?;
                adam_step(adam, &state.theta, &h, bounds).map_err(wrap)?
            }
            OptimizerState::Gcmma(g) => {
                let out = gcmma_step(
                    g,
                    &state.theta,
                    bundle.objective,
                    &bundle.d_objective,
                    &bundle.constraints,
                    &bundle.d_constraints,
                )
                .map_err(wrap)?;
                restoration = out.restoration;
                out.theta
            }
        };
        let step: Vec<f64> = next.iter().zip(&state.theta).map(|(a, b)| a - b).collect();
        state.theta = next;
        state.next_iteration += 1;
        let record = IterationRecord {
            iteration: k,
            objective: bundle.objective,
            constraints: bundle.constraints,
            violation,
            step_norm: norm(&step),
            wall_ms: if spec.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 },
            restoration,
        };
        observer(&record, &state)?;
        history.push(record);
        if let Some(rule) = spec.early_stop {
            if moving_average_settled(&history, rule) {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(RunOutcome {
        history,
        state,
        stopped_early,
    })
}
