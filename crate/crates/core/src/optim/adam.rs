use crate::error::{Error, Result};

fn clamp_all(theta: &mut [f64], bounds: [f64; 2]) {
    for t in theta {
        *t = t.clamp(bounds[0], bounds[1]);
    }
}

/// θ' = clamp(θ − η h).
pub fn sgd_step(eta: f64, theta: &[f64], h: &[f64], bounds: [f64; 2]) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!("step size {eta} must be positive")));
    }
    if theta.len() != h.len() {
        return Err(Error::Parameter(format!("direction has {} entries for {} variables", h.len(), theta.len())));
    }
    let mut next: Vec<f64> = theta.iter().zip(h).map(|(t, g)| t - eta * g).collect();
    clamp_all(&mut next, bounds);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub k: u64,
    pub beta_m: f64,
    pub beta_v: f64,
    pub epsilon: f64,
    pub eta: f64,
}

impl AdamState {
    pub fn new(n: usize, eta: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            k: 0,
            beta_m: 0.9,
            beta_v: 0.999,
            epsilon: 1e-8,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| (0.0..1.0).contains(&b);
        if !ok(self.beta_m) || !ok(self.beta_v) {
            return Err(Error::Parameter(format!("decay rates {} and {} must lie in [0, 1)", self.beta_m, self.beta_v)));
        }
        if !(self.eta > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("step size {} and guard {} must be positive", self.eta, self.epsilon)));
        }
        if self.m.len() != self.v.len() || self.v.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Parameter("second moments must be ≥ 0 and match the first moments".into()));
        }
        Ok(())
    }

    /// Largest |m̂/√v̂| any gradient history can produce at step `k`, by
    /// Cauchy–Schwarz over the two exponential weightings. Equals 1 at the
    /// first step; grows towards (1−β_m)/√(1−β_v)/√(1−β_m²/β_v) for long
    /// histories ending in a spike.
    pub fn step_ratio_bound(&self, k: u64) -> f64 {
        let (bm, bv) = (self.beta_m, self.beta_v);
        if bv == 0.0 {
            return 1.0;
        }
        let q = bm * bm / bv;
        let terms = k as f64;
        let geo = if (q - 1.0).abs() < 1e-15 { terms } else { (1.0 - q.powf(terms)) / (1.0 - q) };
        let s = (1.0 - bm) / (1.0 - bv).sqrt() * geo.sqrt();
        s * (1.0 - bv.powf(terms)).sqrt() / (1.0 - bm.powf(terms))
    }
}

/// One step of Adam with bias correction, projected onto the bounds.
///
/// Every component of the unprojected move is checked against
/// η·[`AdamState::step_ratio_bound`]; a violation means corrupted state.
pub fn adam_step(state: &mut AdamState, theta: &[f64], h: &[f64], bounds: [f64; 2]) -> Result<Vec<f64>> {
    let n = theta.len();
    if h.len() != n || state.m.len() != n {
        return Err(Error::Parameter(format!(
            "Adam state of size {} used with {} variables and {} gradient entries",
            state.m.len(),
            n,
            h.len()
        )));
    }
    state.k += 1;
    let k = state.k as f64;
    let (bm, bv) = (state.beta_m, state.beta_v);
    let cm = 1.0 - bm.powf(k);
    let cv = 1.0 - bv.powf(k);
    let limit = state.eta * state.step_ratio_bound(state.k) * (1.0 + 1e-12);
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        state.m[i] = bm * state.m[i] + (1.0 - bm) * h[i];
        state.v[i] = bv * state.v[i] + (1.0 - bv) * h[i] * h[i];
        let m_hat = state.m[i] / cm;
        let v_hat = state.v[i] / cv;
        let delta = state.eta * m_hat / (v_hat.sqrt() + state.epsilon);
        if !(delta.abs() <= limit) {
            return Err(Error::Numerical(format!(
                "Adam move {delta:e} on variable {i} exceeds its bound {limit:e} at step {}",
                state.k
            )));
        }
        next.push(theta[i] - delta);
    }
    clamp_all(&mut next, bounds);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WIDE: [f64; 2] = [-1e9, 1e9];

    #[test]
    fn sgd_formula_and_projection() {
        assert_eq!(sgd_step(0.05, &[0.0, 0.0], &[1.0, -1.0], WIDE).unwrap(), vec![-0.05, 0.05]);
        assert_eq!(sgd_step(0.05, &[0.3], &[0.0], WIDE).unwrap(), vec![0.3]);
        assert_eq!(sgd_step(1.0, &[0.0], &[-5.0], [-1.0, 1.0]).unwrap(), vec![1.0]);
        assert!(sgd_step(0.0, &[0.0], &[1.0], WIDE).is_err());
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        for beta in [0.0, 0.5, 0.9] {
            let mut s = AdamState::new(3, 0.05);
            s.beta_m = beta;
            let t = adam_step(&mut s, &[0.0; 3], &[2.0, -1e-3, 40.0], WIDE).unwrap();
            for (ti, sign) in t.iter().zip([-1.0, 1.0, -1.0]) {
                assert!((ti - sign * 0.05).abs() < 0.05 * 1e-4, "{ti}");
            }
        }
    }

    #[test]
    fn constant_gradient_moves_by_eta() {
        let mut s = AdamState::new(1, 0.1);
        let t1 = adam_step(&mut s, &[0.0], &[2.0], WIDE).unwrap();
        let t2 = adam_step(&mut s, &t1, &[2.0], WIDE).unwrap();
        assert!((t1[0] + 0.1).abs() < 1e-8);
        assert!((t2[0] + 0.2).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_never_moves() {
        let mut s = AdamState::new(2, 0.1);
        let mut t = vec![0.3, -0.2];
        for _ in 0..20 {
            t = adam_step(&mut s, &t, &[0.0, 0.0], WIDE).unwrap();
        }
        assert_eq!(t, vec![0.3, -0.2]);
    }

    #[test]
    fn late_spike_exceeds_eta_but_not_the_bound() {
        let mut s = AdamState::new(1, 1.0);
        let mut t = vec![0.0];
        for _ in 0..2000 {
            t = adam_step(&mut s, &t, &[0.0], WIDE).unwrap();
        }
        let next = adam_step(&mut s, &t, &[1.0], WIDE).unwrap();
        let moved = (next[0] - t[0]).abs();
        assert!(moved > 2.5, "{moved}");
        assert!(moved <= s.step_ratio_bound(s.k));
        assert!((s.step_ratio_bound(1) - 1.0).abs() < 1e-15);
    }
}
