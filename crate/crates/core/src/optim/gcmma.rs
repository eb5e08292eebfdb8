//! Method of moving asymptotes driven by (stochastic) gradient estimates.
//!
//! Each step builds the separable rational approximation of GCMMA around the
//! current point and solves it with a primal-dual interior point method. By
//! default no inner iterations are made, so the approximation is not forced
//! to be conservative; [`gcmma_step_conservative`] adds them for problems
//! where exact function values are available.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcmmaParams {
    /// Initial asymptote offset as a fraction of the box width.
    pub asyinit: f64,
    /// Expansion factor when successive moves keep their sign.
    pub asyincr: f64,
    /// Contraction factor when successive moves flip sign.
    pub asydecr: f64,
    /// Distance kept from the asymptotes, as a fraction of x − L and U − x.
    pub albefa: f64,
    /// Largest move per iteration as a fraction of the box width.
    pub move_limit: f64,
    /// Floor of the curvature parameters ρ.
    pub raa_floor: f64,
    /// Subproblem KKT residual to reach.
    pub kkt_tolerance: f64,
    /// Weight of the elastic variables; large values make the artificial
    /// constraint slack expensive.
    pub elastic_weight: f64,
}

impl Default for GcmmaParams {
    fn default() -> Self {
        Self {
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            albefa: 0.1,
            move_limit: 0.1,
            raa_floor: 1e-6,
            kkt_tolerance: 1e-8,
            elastic_weight: 1000.0,
        }
    }
}

impl GcmmaParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        let ok = p.asyinit > 0.0
            && p.asyincr >= 1.0
            && p.asydecr > 0.0
            && p.asydecr <= 1.0
            && p.albefa > 0.0
            && p.albefa < 1.0
            && p.move_limit > 0.0
            && p.raa_floor > 0.0
            && p.kkt_tolerance > 0.0
            && p.elastic_weight > 0.0;
        if !ok {
            return Err(Error::Parameter(format!("invalid GCMMA parameters {p:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcmmaState {
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    /// Previous iterate, and the one before it.
    pub xold1: Vec<f64>,
    pub xold2: Vec<f64>,
    /// Steps taken so far.
    pub iteration: u64,
    pub bounds: [f64; 2],
    pub params: GcmmaParams,
}

impl GcmmaState {
    pub fn new(theta: &[f64], bounds: [f64; 2], params: GcmmaParams) -> Result<Self> {
        params.validate()?;
        if !(bounds[0] < bounds[1]) || !bounds.iter().all(|b| b.is_finite()) {
            return Err(Error::Parameter(format!("GCMMA needs a finite box, got {bounds:?}")));
        }
        Ok(Self {
            low: vec![bounds[0]; theta.len()],
            upp: vec![bounds[1]; theta.len()],
            xold1: theta.to_vec(),
            xold2: theta.to_vec(),
            iteration: 0,
            bounds,
            params,
        })
    }

    fn update_asymptotes(&mut self, x: &[f64]) {
        let p = &self.params;
        let width = self.bounds[1] - self.bounds[0];
        for j in 0..x.len() {
            if self.iteration < 2 {
                self.low[j] = x[j] - p.asyinit * width;
                self.upp[j] = x[j] + p.asyinit * width;
            } else {
                let trend = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if trend > 0.0 {
                    p.asyincr
                } else if trend < 0.0 {
                    p.asydecr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * width, x[j] - 0.01 * width);
                self.upp[j] = upp.clamp(x[j] + 0.01 * width, x[j] + 10.0 * width);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcmmaOutcome {
    pub theta: Vec<f64>,
    /// The approximate constraints could not be met inside the move limits;
    /// the step minimized their violation instead.
    pub restoration: bool,
    pub kkt_residual: f64,
    /// Inner iterations spent making the approximation conservative.
    pub inner_iterations: usize,
}

/// Separable approximation f̃_i(x) = r_i + Σ_j p_ij/(U_j − x_j) + q_ij/(x_j − L_j).
struct Approximation {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Row 0 is the objective, rows 1.. the constraints.
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<f64>,
}

fn curvature_floor(grad: &[f64], width: f64, floor: f64) -> f64 {
    let n = grad.len().max(1) as f64;
    (0.1 / n * grad.iter().map(|g| g.abs() * width).sum::<f64>()).max(floor)
}

fn build(state: &GcmmaState, x: &[f64], values: &[f64], grads: &[&[f64]], raa: &[f64]) -> Approximation {
    let n = x.len();
    let prm = &state.params;
    let width = state.bounds[1] - state.bounds[0];
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    for j in 0..n {
        alpha[j] = (state.low[j] + prm.albefa * (x[j] - state.low[j]))
            .max(x[j] - prm.move_limit * width)
            .max(state.bounds[0]);
        beta[j] = (state.upp[j] - prm.albefa * (state.upp[j] - x[j]))
            .min(x[j] + prm.move_limit * width)
            .min(state.bounds[1]);
    }
    let mut p = Vec::with_capacity(grads.len());
    let mut q = Vec::with_capacity(grads.len());
    let mut r = Vec::with_capacity(grads.len());
    for (i, g) in grads.iter().enumerate() {
        let mut pi = vec![0.0; n];
        let mut qi = vec![0.0; n];
        let mut ri = values[i];
        for j in 0..n {
            let ux = state.upp[j] - x[j];
            let xl = x[j] - state.low[j];
            let plus = g[j].max(0.0);
            let minus = (-g[j]).max(0.0);
            let base = 0.001 * (plus + minus) + raa[i] / width;
            pi[j] = ux * ux * (plus + base);
            qi[j] = xl * xl * (minus + base);
            ri -= pi[j] / ux + qi[j] / xl;
        }
        p.push(pi);
        q.push(qi);
        r.push(ri);
    }
    Approximation { alpha, beta, p, q, r }
}

impl Approximation {
    fn value(&self, state: &GcmmaState, i: usize, x: &[f64]) -> f64 {
        let mut v = self.r[i];
        for j in 0..x.len() {
            v += self.p[i][j] / (state.upp[j] - x[j]) + self.q[i][j] / (x[j] - state.low[j]);
        }
        v
    }
}

struct Subproblem<'a> {
    low: &'a [f64],
    upp: &'a [f64],
    alpha: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    /// Right-hand sides: constraints read Σ p/(U−x) + q/(x−L) ≤ b.
    b: Vec<f64>,
    c: f64,
}

/// Primal-dual point of the subproblem
///   min f̃₀(x) + z + Σ (c y_i + ½ y_i²)  s.t.  f̃_i(x) − y_i ≤ b_i, y ≥ 0, z ≥ 0.
/// The `a` coefficients of the general MMA form are zero here, so z only
/// enters through its barrier.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Subproblem<'_> {
    fn m(&self) -> usize {
        self.p.len()
    }

    /// ∂/∂x of the Lagrangian and the approximate constraint values.
    fn partials(&self, pt: &Point) -> (Vec<f64>, Vec<f64>) {
        let n = pt.x.len();
        let mut dpsi = vec![0.0; n];
        let mut gvec = vec![0.0; self.m()];
        for j in 0..n {
            let ux = self.upp[j] - pt.x[j];
            let xl = pt.x[j] - self.low[j];
            let mut plam = self.p0[j];
            let mut qlam = self.q0[j];
            for i in 0..self.m() {
                plam += pt.lam[i] * self.p[i][j];
                qlam += pt.lam[i] * self.q[i][j];
                gvec[i] += self.p[i][j] / ux + self.q[i][j] / xl;
            }
            dpsi[j] = plam / (ux * ux) - qlam / (xl * xl);
        }
        (dpsi, gvec)
    }

    fn residual(&self, pt: &Point, epsi: f64) -> Vec<f64> {
        let (dpsi, gvec) = self.partials(pt);
        let n = pt.x.len();
        let m = self.m();
        let mut r = Vec::with_capacity(3 * n + 4 * m + 2);
        for j in 0..n {
            r.push(dpsi[j] - pt.xsi[j] + pt.eta[j]);
        }
        for i in 0..m {
            r.push(self.c + pt.y[i] - pt.mu[i] - pt.lam[i]);
        }
        r.push(1.0 - pt.zet);
        for i in 0..m {
            r.push(gvec[i] - pt.y[i] + pt.s[i] - self.b[i]);
        }
        for j in 0..n {
            r.push(pt.xsi[j] * (pt.x[j] - self.alpha[j]) - epsi);
            r.push(pt.eta[j] * (self.beta[j] - pt.x[j]) - epsi);
        }
        for i in 0..m {
            r.push(pt.mu[i] * pt.y[i] - epsi);
            r.push(pt.lam[i] * pt.s[i] - epsi);
        }
        r.push(pt.zet * pt.z - epsi);
        r
    }

    fn solve(&self, tolerance: f64) -> Result<(Point, f64)> {
        let n = self.alpha.len();
        let m = self.m();
        let mut pt = Point {
            x: (0..n).map(|j| 0.5 * (self.alpha[j] + self.beta[j])).collect(),
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            xsi: (0..n).map(|j| (1.0 / (0.5 * (self.beta[j] - self.alpha[j]))).max(1.0)).collect(),
            eta: (0..n).map(|j| (1.0 / (0.5 * (self.beta[j] - self.alpha[j]))).max(1.0)).collect(),
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        let max_abs = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let epsimin = 0.1 * tolerance;
        let mut epsi = 1.0;
        while epsi > epsimin {
            let mut res = self.residual(&pt, epsi);
            let mut resnorm = crate::linalg::norm(&res);
            let mut inner = 0;
            while max_abs(&res) > 0.9 * epsi && inner < 200 {
                inner += 1;
                let d = self.newton_direction(&pt, epsi)?;
                let step = self.step_to_boundary(&pt, &d);
                let mut steg = step;
                let old = pt.clone();
                let mut trial_norm = 2.0 * resnorm;
                let mut tries = 0;
                while trial_norm > resnorm && tries < 50 {
                    tries += 1;
                    pt = old.clone();
                    pt.advance(&d, steg);
                    res = self.residual(&pt, epsi);
                    trial_norm = crate::linalg::norm(&res);
                    steg *= 0.5;
                }
                resnorm = trial_norm;
            }
            epsi *= 0.1;
        }
        let kkt = max_abs(&self.residual(&pt, 0.0));
        if !kkt.is_finite() || pt.x.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("GCMMA subproblem diverged".into()));
        }
        Ok((pt, kkt))
    }

    fn newton_direction(&self, pt: &Point, epsi: f64) -> Result<Point> {
        let n = pt.x.len();
        let m = self.m();
        let (dpsi, gvec) = self.partials(pt);
        let mut diagx = vec![0.0; n];
        let mut delx = vec![0.0; n];
        // gg[i][j] = ∂f̃_i/∂x_j
        let mut gg = vec![vec![0.0; n]; m];
        for j in 0..n {
            let ux = self.upp[j] - pt.x[j];
            let xl = pt.x[j] - self.low[j];
            let mut plam = self.p0[j];
            let mut qlam = self.q0[j];
            for i in 0..m {
                plam += pt.lam[i] * self.p[i][j];
                qlam += pt.lam[i] * self.q[i][j];
                gg[i][j] = self.p[i][j] / (ux * ux) - self.q[i][j] / (xl * xl);
            }
            let xa = pt.x[j] - self.alpha[j];
            let bx = self.beta[j] - pt.x[j];
            delx[j] = dpsi[j] - epsi / xa + epsi / bx;
            diagx[j] = 2.0 * (plam / (ux * ux * ux) + qlam / (xl * xl * xl)) + pt.xsi[j] / xa + pt.eta[j] / bx;
        }
        let dely: Vec<f64> = (0..m).map(|i| self.c + pt.y[i] - pt.lam[i] - epsi / pt.y[i]).collect();
        let delz = 1.0 - epsi / pt.z;
        let dellam: Vec<f64> = (0..m).map(|i| gvec[i] - pt.y[i] - self.b[i] + epsi / pt.lam[i]).collect();
        let diagy: Vec<f64> = (0..m).map(|i| 1.0 + pt.mu[i] / pt.y[i]).collect();
        let diaglamyi: Vec<f64> = (0..m).map(|i| pt.s[i] / pt.lam[i] + 1.0 / diagy[i]).collect();

        let (dx, dlam, dz);
        if m < n {
            // Reduced system in (λ, z).
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut rhs = DVector::<f64>::zeros(m + 1);
            for i in 0..m {
                a[(i, i)] = diaglamyi[i];
                for k in 0..m {
                    a[(i, k)] += (0..n).map(|j| gg[i][j] * gg[k][j] / diagx[j]).sum::<f64>();
                }
                rhs[i] = dellam[i] + dely[i] / diagy[i] - (0..n).map(|j| gg[i][j] * delx[j] / diagx[j]).sum::<f64>();
            }
            a[(m, m)] = -pt.zet / pt.z;
            rhs[m] = delz;
            let sol = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular GCMMA subproblem system".into()))?;
            dlam = (0..m).map(|i| sol[i]).collect::<Vec<_>>();
            dz = sol[m];
            dx = (0..n)
                .map(|j| (-delx[j] - (0..m).map(|i| gg[i][j] * dlam[i]).sum::<f64>()) / diagx[j])
                .collect::<Vec<_>>();
        } else {
            // Reduced system in (x, z).
            let dellamyi: Vec<f64> = (0..m).map(|i| dellam[i] + dely[i] / diagy[i]).collect();
            let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
            let mut rhs = DVector::<f64>::zeros(n + 1);
            for j in 0..n {
                a[(j, j)] = diagx[j];
                for k in 0..n {
                    a[(j, k)] += (0..m).map(|i| gg[i][j] * gg[i][k] / diaglamyi[i]).sum::<f64>();
                }
                rhs[j] = -(delx[j] + (0..m).map(|i| gg[i][j] * dellamyi[i] / diaglamyi[i]).sum::<f64>());
            }
            a[(n, n)] = pt.zet / pt.z;
            rhs[n] = -delz;
            let sol = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular GCMMA subproblem system".into()))?;
            dx = (0..n).map(|j| sol[j]).collect::<Vec<_>>();
            dz = sol[n];
            dlam = (0..m)
                .map(|i| ((0..n).map(|j| gg[i][j] * dx[j]).sum::<f64>() + dellamyi[i]) / diaglamyi[i])
                .collect::<Vec<_>>();
        }
        let dy: Vec<f64> = (0..m).map(|i| (-dely[i] + dlam[i]) / diagy[i]).collect();
        let dxsi = (0..n)
            .map(|j| {
                let xa = pt.x[j] - self.alpha[j];
                -pt.xsi[j] + epsi / xa - pt.xsi[j] * dx[j] / xa
            })
            .collect();
        let deta = (0..n)
            .map(|j| {
                let bx = self.beta[j] - pt.x[j];
                -pt.eta[j] + epsi / bx + pt.eta[j] * dx[j] / bx
            })
            .collect();
        let dmu = (0..m).map(|i| -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dy[i] / pt.y[i]).collect();
        let dzet = -pt.zet + epsi / pt.z - pt.zet * dz / pt.z;
        let ds = (0..m).map(|i| -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i]).collect();
        Ok(Point {
            x: dx,
            y: dy,
            z: dz,
            lam: dlam,
            xsi: dxsi,
            eta: deta,
            mu: dmu,
            zet: dzet,
            s: ds,
        })
    }

    /// Largest step (≤ 1) keeping the iterate strictly interior, with the
    /// usual 1% margin.
    fn step_to_boundary(&self, pt: &Point, d: &Point) -> f64 {
        let mut worst: f64 = 1.0;
        let mut check = |v: f64, dv: f64| worst = worst.max(-1.01 * dv / v);
        for (v, dv) in [(&pt.y, &d.y), (&pt.lam, &d.lam), (&pt.xsi, &d.xsi), (&pt.eta, &d.eta), (&pt.mu, &d.mu), (&pt.s, &d.s)] {
            for (a, b) in v.iter().zip(dv.iter()) {
                check(*a, *b);
            }
        }
        check(pt.z, d.z);
        check(pt.zet, d.zet);
        for j in 0..pt.x.len() {
            worst = worst.max(-1.01 * d.x[j] / (pt.x[j] - self.alpha[j]));
            worst = worst.max(1.01 * d.x[j] / (self.beta[j] - pt.x[j]));
        }
        1.0 / worst
    }
}

impl Point {
    fn advance(&mut self, d: &Point, t: f64) {
        let axpy = |v: &mut Vec<f64>, dv: &[f64]| {
            for (a, b) in v.iter_mut().zip(dv) {
                *a += t * b;
            }
        };
        axpy(&mut self.x, &d.x);
        axpy(&mut self.y, &d.y);
        axpy(&mut self.lam, &d.lam);
        axpy(&mut self.xsi, &d.xsi);
        axpy(&mut self.eta, &d.eta);
        axpy(&mut self.mu, &d.mu);
        axpy(&mut self.s, &d.s);
        self.z += t * d.z;
        self.zet += t * d.zet;
    }
}

fn check_sizes(state: &GcmmaState, theta: &[f64], d_objective: &[f64], constraints: &[f64], d_constraints: &[Vec<f64>]) -> Result<()> {
    let n = theta.len();
    if state.low.len() != n || d_objective.len() != n {
        return Err(Error::Parameter(format!(
            "GCMMA state of size {} used with {} variables and {} gradient entries",
            state.low.len(),
            n,
            d_objective.len()
        )));
    }
    if constraints.len() != d_constraints.len() || d_constraints.iter().any(|g| g.len() != n) {
        return Err(Error::Parameter("constraint values and gradients do not match".into()));
    }
    if theta.iter().any(|t| *t < state.bounds[0] || *t > state.bounds[1]) {
        return Err(Error::Bounds("GCMMA iterate outside its box".into()));
    }
    Ok(())
}

fn solve_approximation(state: &GcmmaState, approx: &Approximation, restore: bool) -> Result<(Point, f64)> {
    let m = approx.p.len() - 1;
    let n = approx.alpha.len();
    // Restoration keeps only a small proximal curvature in the objective, so
    // the subproblem minimizes the elastic violation.
    let width = state.bounds[1] - state.bounds[0];
    let prox: Vec<f64>;
    let (p0, q0): (&[f64], &[f64]) = if restore {
        prox = (0..n).map(|j| state.params.raa_floor / width * (state.upp[j] - state.low[j]).powi(2)).collect();
        (&prox, &prox)
    } else {
        (&approx.p[0], &approx.q[0])
    };
    let sub = Subproblem {
        low: &state.low,
        upp: &state.upp,
        alpha: &approx.alpha,
        beta: &approx.beta,
        p0,
        q0,
        p: &approx.p[1..],
        q: &approx.q[1..],
        b: (0..m).map(|i| -approx.r[i + 1]).collect(),
        c: state.params.elastic_weight,
    };
    sub.solve(state.params.kkt_tolerance)
}

fn advance_state(state: &mut GcmmaState, theta: &[f64]) {
    state.xold2 = std::mem::replace(&mut state.xold1, theta.to_vec());
    state.iteration += 1;
}

fn finish(state: &GcmmaState, approx: &Approximation, mut pt: Point, kkt: f64, inner: usize) -> Result<GcmmaOutcome> {
    let infeasible = pt.y.iter().any(|&y| y > 1e-6);
    let mut kkt = kkt;
    if infeasible {
        let (p, k) = solve_approximation(state, approx, true)?;
        pt = p;
        kkt = k;
    }
    if kkt > state.params.kkt_tolerance {
        return Err(Error::Numerical(format!(
            "GCMMA subproblem KKT residual {kkt:e} above {:e}",
            state.params.kkt_tolerance
        )));
    }
    let mut theta = pt.x;
    for t in &mut theta {
        *t = t.clamp(state.bounds[0], state.bounds[1]);
    }
    Ok(GcmmaOutcome {
        theta,
        restoration: infeasible,
        kkt_residual: kkt,
        inner_iterations: inner,
    })
}

fn prepare(state: &mut GcmmaState, theta: &[f64], d_objective: &[f64], d_constraints: &[Vec<f64>]) -> Vec<f64> {
    state.update_asymptotes(theta);
    let width = state.bounds[1] - state.bounds[0];
    let floor = state.params.raa_floor;
    std::iter::once(d_objective)
        .chain(d_constraints.iter().map(|g| g.as_slice()))
        .map(|g| curvature_floor(g, width, floor))
        .collect()
}

/// One GCMMA outer iteration with no inner iterations.
pub fn gcmma_step(
    state: &mut GcmmaState,
    theta: &[f64],
    objective: f64,
    d_objective: &[f64],
    constraints: &[f64],
    d_constraints: &[Vec<f64>],
) -> Result<GcmmaOutcome> {
    check_sizes(state, theta, d_objective, constraints, d_constraints)?;
    let raa = prepare(state, theta, d_objective, d_constraints);
    let values: Vec<f64> = std::iter::once(objective).chain(constraints.iter().copied()).collect();
    let grads: Vec<&[f64]> = std::iter::once(d_objective).chain(d_constraints.iter().map(|g| g.as_slice())).collect();
    let approx = build(state, theta, &values, &grads, &raa);
    let (pt, kkt) = solve_approximation(state, &approx, false)?;
    let out = finish(state, &approx, pt, kkt, 0)?;
    advance_state(state, theta);
    Ok(out)
}

/// GCMMA outer iteration with up to `max_inner` inner iterations: the
/// candidate is re-evaluated with `evaluate` and the curvature of every
/// non-conservative approximation raised until f̃_i(x̂) ≥ f_i(x̂).
pub fn gcmma_step_conservative(
    state: &mut GcmmaState,
    theta: &[f64],
    objective: f64,
    d_objective: &[f64],
    constraints: &[f64],
    d_constraints: &[Vec<f64>],
    max_inner: usize,
    mut evaluate: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
) -> Result<GcmmaOutcome> {
    check_sizes(state, theta, d_objective, constraints, d_constraints)?;
    let mut raa = prepare(state, theta, d_objective, d_constraints);
    let values: Vec<f64> = std::iter::once(objective).chain(constraints.iter().copied()).collect();
    let grads: Vec<&[f64]> = std::iter::once(d_objective).chain(d_constraints.iter().map(|g| g.as_slice())).collect();
    let mut inner = 0;
    loop {
        let approx = build(state, theta, &values, &grads, &raa);
        let (pt, kkt) = solve_approximation(state, &approx, false)?;
        if inner == max_inner {
            let out = finish(state, &approx, pt, kkt, inner)?;
            advance_state(state, theta);
            return Ok(out);
        }
        let x = &pt.x;
        let (f_new, g_new) = evaluate(x)?;
        let actual: Vec<f64> = std::iter::once(f_new).chain(g_new).collect();
        // Svanberg's scaled distance between the candidate and the
        // expansion point.
        let width = state.bounds[1] - state.bounds[0];
        let dist: f64 = (0..x.len())
            .map(|j| {
                let (u, l) = (state.upp[j], state.low[j]);
                (u - l) * (x[j] - theta[j]).powi(2) / ((u - x[j]) * (x[j] - l) * width)
            })
            .sum::<f64>()
            .max(1e-10);
        let mut conservative = true;
        for i in 0..actual.len() {
            let approx_value = approx.value(state, i, x);
            let gap = actual[i] - approx_value;
            if gap > 1e-12 * (1.0 + actual[i].abs()) {
                conservative = false;
                raa[i] = (1.1 * (raa[i] + gap / dist)).min(10.0 * raa[i]);
            }
        }
        if conservative {
            let out = finish(state, &approx, pt, kkt, inner)?;
            advance_state(state, theta);
            return Ok(out);
        }
        inner += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_quadratic(start: f64, iterations: usize) -> Vec<f64> {
        let mut state = GcmmaState::new(&[start], [0.0, 1.0], GcmmaParams::default()).unwrap();
        let mut x = vec![start];
        let mut path = vec![start];
        for _ in 0..iterations {
            let f = (x[0] - 1.0).powi(2);
            let out = gcmma_step(&mut state, &x, f, &[2.0 * (x[0] - 1.0)], &[x[0] - 0.4], &[vec![1.0]]).unwrap();
            assert!(out.kkt_residual < 1e-8);
            x = out.theta;
            path.push(x[0]);
        }
        path
    }

    #[test]
    fn constrained_quadratic_reaches_the_kkt_point() {
        for start in [0.0, 0.2, 0.9] {
            let path = run_quadratic(start, 30);
            let last = *path.last().unwrap();
            assert!((last - 0.4).abs() < 1e-4, "start {start}: {path:?}");
        }
    }

    #[test]
    fn optimal_point_stays_put() {
        let mut state = GcmmaState::new(&[0.3, 0.7], [0.0, 1.0], GcmmaParams::default()).unwrap();
        let out = gcmma_step(&mut state, &[0.3, 0.7], 0.0, &[0.0, 0.0], &[-0.5], &[vec![0.0, 0.0]]).unwrap();
        assert!((out.theta[0] - 0.3).abs() < 1e-7 && (out.theta[1] - 0.7).abs() < 1e-7, "{:?}", out.theta);
        assert!(!out.restoration);
    }

    #[test]
    fn respects_move_limit_and_box() {
        let mut state = GcmmaState::new(&[0.5], [0.0, 1.0], GcmmaParams::default()).unwrap();
        let out = gcmma_step(&mut state, &[0.5], 0.0, &[-100.0], &[], &[]).unwrap();
        assert!(out.theta[0] <= 0.6 + 1e-12 && out.theta[0] > 0.5);
    }

    #[test]
    fn infeasible_subproblem_falls_back_to_restoration() {
        // g = x − 0.1 ≤ 0 from x = 0.9 cannot be met within one move limit.
        let mut state = GcmmaState::new(&[0.9], [0.0, 1.0], GcmmaParams::default()).unwrap();
        let out = gcmma_step(&mut state, &[0.9], 0.0, &[1.0], &[0.8], &[vec![1.0]]).unwrap();
        assert!(out.restoration);
        assert!((out.theta[0] - 0.8).abs() < 1e-6, "{:?}", out.theta);
    }

    #[test]
    fn conservative_steps_decrease_a_convex_quadratic() {
        let target = [0.3, -0.7, 0.55, 1.2, -1.4];
        let f = |x: &[f64]| x.iter().zip(&target).enumerate().map(|(j, (x, t))| (1.0 + j as f64) * (x - t).powi(2)).sum::<f64>();
        let grad = |x: &[f64]| -> Vec<f64> {
            x.iter().zip(&target).enumerate().map(|(j, (x, t))| 2.0 * (1.0 + j as f64) * (x - t)).collect()
        };
        let mut x = vec![-1.5, 1.5, -1.0, -1.5, 1.0];
        let mut state = GcmmaState::new(&x, [-1.5, 1.5], GcmmaParams::default()).unwrap();
        let mut prev = f(&x);
        for _ in 0..60 {
            let out = gcmma_step_conservative(&mut state, &x, prev, &grad(&x), &[], &[], 20, |c| Ok((f(c), vec![]))).unwrap();
            x = out.theta;
            let now = f(&x);
            // Monotone up to the accuracy of the subproblem solution.
            assert!(now <= prev + 1e-12, "{now} > {prev}");
            prev = now;
        }
        assert!(prev < 1e-6, "{prev}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GcmmaState::new(&[0.0], [1.0, 0.0], GcmmaParams::default()).is_err());
        let mut s = GcmmaState::new(&[0.0], [0.0, 1.0], GcmmaParams::default()).unwrap();
        assert!(gcmma_step(&mut s, &[0.0, 0.0], 0.0, &[0.0], &[], &[]).is_err());
        assert!(gcmma_step(&mut s, &[2.0], 0.0, &[0.0], &[], &[]).is_err());
    }
}
