//! Modified Newton iteration on the fixed-point system
//!
//! ```text
//! φ1_n(β, ν) = −F_n(p#, B#) + β_n·(p#_n + p_cir,n)
//! φ2_n(β, ν) = −1 + ν_n·(p#_n + p_cir,n)
//! ```
//!
//! where `(p#, B#)` solves the parametric subproblem in [`crate::inner`] and
//! `F_n = c_n·f_n(r_n − r_e,n)`. The step is `σ = −φ/(p# + p_cir)` with a
//! geometric backtracking line search on `‖φ‖₂`.
//!
//! That step ignores how the shared bandwidth couples the users. Near the
//! solution the neglected terms can dominate, and then no step length along
//! `σ` reduces `‖φ‖₂`. When the line search fails, or only succeeds at a
//! step so short that the decrease is rounding noise, a full Newton step on
//! a finite-difference Jacobian is tried instead.

use std::f64::consts::LN_2;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, UeeError};
use crate::inner::{solve_p3, DualParams, InnerSolution};
use crate::model::{
    check_feasible, default_allocation, per_user_uee, rate_unchecked, Allocation, ProblemInstance,
};
use crate::special::RootConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Line-search shrink factor in (0, 1).
    pub xi: f64,
    /// Sufficient-decrease constant in (0, 1).
    pub epsilon: f64,
    /// Stop once `‖φ‖₂ <= phi_tol·sqrt(2N)`.
    pub phi_tol: f64,
    pub max_outer: usize,
    pub max_linesearch: usize,
    pub inner_cfg: RootConfig,
    /// Accepted steps needing more than this many halvings count as stalled.
    pub stall_j: usize,
    /// Try a finite-difference Newton step when the plain step stalls.
    pub jacobian_fallback: bool,
    /// Test hook: negates the search direction.
    #[doc(hidden)]
    #[serde(skip)]
    pub flip_direction: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            xi: 0.5,
            epsilon: 0.01,
            phi_tol: 1e-6,
            max_outer: 100,
            max_linesearch: 60,
            inner_cfg: RootConfig::precise(),
            stall_j: 30,
            jacobian_fallback: true,
            flip_direction: false,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return domain(format!("xi must lie in (0, 1), got {}", self.xi));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return domain(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.phi_tol > 0.0) {
            return domain("phi_tol must be positive");
        }
        self.inner_cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonState {
    pub dual: DualParams,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi_norm: f64,
    pub inner: InnerSolution,
    pub iteration: usize,
    pub j_history: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub allocation: Allocation,
    pub objective: f64,
    pub per_user_uee: Vec<f64>,
    pub outer_iterations: usize,
    pub phi_norm_trace: Vec<f64>,
    pub j_history: Vec<usize>,
    /// Iterations that took the finite-difference Newton step.
    pub fallback_steps: usize,
    /// Normalized KKT residual of the epigraph problem; `None` for the
    /// baselines, which carry no multipliers.
    pub kkt_residual: Option<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub status: Status,
    pub message: Option<String>,
}

impl SolveReport {
    pub(crate) fn from_allocation(
        inst: &ProblemInstance,
        allocation: Allocation,
        iterations: usize,
        start: Instant,
    ) -> Result<Self> {
        let per_user_uee = per_user_uee(&allocation, inst)?;
        let objective = per_user_uee
            .iter()
            .zip(&inst.users)
            .map(|(v, u)| u.c * v)
            .sum();
        Ok(SolveReport {
            allocation,
            objective,
            per_user_uee,
            outer_iterations: iterations,
            phi_norm_trace: Vec::new(),
            j_history: Vec::new(),
            fallback_steps: 0,
            kkt_residual: None,
            wall_time: start.elapsed().as_secs_f64(),
            status: Status::Converged,
            message: None,
        })
    }
}

/// `β_n = c_n·f_n(r_s)/(p_n + p_cir)` and `ν_n = 1/(p_n + p_cir)` at a
/// feasible allocation.
pub fn init_dual(inst: &ProblemInstance, a0: &Allocation) -> Result<DualParams> {
    let rep = check_feasible(a0, inst, None)?;
    if !rep.is_feasible {
        return domain("initial allocation is infeasible");
    }
    let mut beta = Vec::with_capacity(inst.n());
    let mut nu = Vec::with_capacity(inst.n());
    for ((&p, &b), u) in a0.p.iter().zip(&a0.b).zip(&inst.users) {
        let rs = (rate_unchecked(p, b, u) - u.r_e).max(0.0);
        let f = u.utility.eval(rs)?;
        let beta_n = u.c * f / (p + u.p_cir);
        if !(beta_n > 0.0) {
            return domain(format!(
                "initial beta {beta_n} is not positive; the utility is non-positive at r_s = {rs}"
            ));
        }
        beta.push(beta_n);
        nu.push(1.0 / (p + u.p_cir));
    }
    DualParams::new(beta, nu)
}

fn weighted_utility(inst: &ProblemInstance, a: &Allocation, n: usize) -> f64 {
    let u = &inst.users[n];
    let rs = (rate_unchecked(a.p[n], a.b[n], u) - u.r_e).max(0.0);
    u.c * u.utility.eval_unchecked(rs)
}

/// Solves the subproblem at `dual` and evaluates both residual blocks.
pub fn eval_phi(
    inst: &ProblemInstance,
    dual: &DualParams,
    cfg: &RootConfig,
) -> Result<(Vec<f64>, Vec<f64>, InnerSolution)> {
    let inner = solve_p3(inst, dual, cfg)?;
    let a = &inner.allocation;
    let mut phi1 = Vec::with_capacity(inst.n());
    let mut phi2 = Vec::with_capacity(inst.n());
    for (n, u) in inst.users.iter().enumerate() {
        let spend = a.p[n] + u.p_cir;
        phi1.push(-weighted_utility(inst, a, n) + dual.beta[n] * spend);
        phi2.push(-1.0 + dual.nu[n] * spend);
    }
    Ok((phi1, phi2, inner))
}

fn norm(phi1: &[f64], phi2: &[f64]) -> f64 {
    phi1.iter().chain(phi2).map(|v| v * v).sum::<f64>().sqrt()
}

/// `σ = −φ/(p# + p_cir)` for both blocks.
pub fn newton_direction(inst: &ProblemInstance, state: &NewtonState) -> (Vec<f64>, Vec<f64>) {
    let a = &state.inner.allocation;
    let spend: Vec<f64> = inst
        .users
        .iter()
        .zip(&a.p)
        .map(|(u, p)| p + u.p_cir)
        .collect();
    let s1 = state.phi1.iter().zip(&spend).map(|(f, s)| -f / s).collect();
    let s2 = state.phi2.iter().zip(&spend).map(|(f, s)| -f / s).collect();
    (s1, s2)
}

/// Newton direction on the full Jacobian of `φ` in `(β, ν)`, estimated by
/// central differences with relative step `1e-6`.
pub fn jacobian_direction(
    inst: &ProblemInstance,
    state: &NewtonState,
    cfg: &RootConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = inst.n();
    let x: Vec<f64> = state
        .dual
        .beta
        .iter()
        .chain(&state.dual.nu)
        .copied()
        .collect();
    let phi_at = |x: &[f64]| -> Result<Vec<f64>> {
        let dual = DualParams::new(x[..n].to_vec(), x[n..].to_vec())?;
        let (a, b, _) = eval_phi(inst, &dual, cfg)?;
        Ok(a.into_iter().chain(b).collect())
    };
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        let h = 1e-6 * x[j];
        let mut up = x.clone();
        let mut down = x.clone();
        up[j] += h;
        down[j] -= h;
        let (fu, fd) = (phi_at(&up)?, phi_at(&down)?);
        for i in 0..2 * n {
            jac[(i, j)] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    let rhs = -DVector::from_iterator(2 * n, state.phi1.iter().chain(&state.phi2).copied());
    let d = jac
        .lu()
        .solve(&rhs)
        .filter(|d| d.iter().all(|v| v.is_finite()))
        .ok_or_else(|| UeeError::Solver("singular finite-difference Jacobian".into()))?;
    Ok((
        d.rows(0, n).iter().copied().collect(),
        d.rows(n, n).iter().copied().collect(),
    ))
}

/// Result of an accepted line-search trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub j: usize,
    pub dual: DualParams,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi_norm: f64,
    pub inner: InnerSolution,
}

/// Smallest `J` with `‖φ(β + ξ^J σ1, ν + ξ^J σ2)‖ <= (1 − ξ^J ε)·‖φ(β, ν)‖`.
///
/// Trials that leave a non-positive multiplier or whose subproblem fails
/// count as rejected.
pub fn line_search(
    inst: &ProblemInstance,
    state: &NewtonState,
    dir: &(Vec<f64>, Vec<f64>),
    cfg: &NewtonConfig,
) -> Result<StepOutcome> {
    let mut t = 1.0;
    for j in 0..=cfg.max_linesearch {
        let beta: Vec<f64> = state
            .dual
            .beta
            .iter()
            .zip(&dir.0)
            .map(|(b, s)| b + t * s)
            .collect();
        let nu: Vec<f64> = state
            .dual
            .nu
            .iter()
            .zip(&dir.1)
            .map(|(v, s)| v + t * s)
            .collect();
        if let Ok(dual) = DualParams::new(beta, nu) {
            match eval_phi(inst, &dual, &cfg.inner_cfg) {
                Ok((phi1, phi2, inner)) => {
                    let phi_norm = norm(&phi1, &phi2);
                    if phi_norm <= (1.0 - t * cfg.epsilon) * state.phi_norm {
                        return Ok(StepOutcome {
                            j,
                            dual,
                            phi1,
                            phi2,
                            phi_norm,
                            inner,
                        });
                    }
                }
                Err(e) => debug!("line search trial {j} failed: {e}"),
            }
        }
        t *= cfg.xi;
    }
    Err(UeeError::Solver(format!(
        "line search found no acceptable step within {} trials",
        cfg.max_linesearch
    )))
}

/// Global solve from the equal-split point with rates at `2·r_min`.
pub fn solve(inst: &ProblemInstance, cfg: &NewtonConfig) -> Result<SolveReport> {
    solve_from(inst, &default_allocation(inst), cfg)
}

/// Global solve from a caller-supplied feasible starting allocation.
pub fn solve_from(
    inst: &ProblemInstance,
    a0: &Allocation,
    cfg: &NewtonConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    inst.validate()?;
    cfg.validate()?;
    let dual = init_dual(inst, a0)?;
    let (phi1, phi2, inner) = eval_phi(inst, &dual, &cfg.inner_cfg)?;
    let phi_norm = norm(&phi1, &phi2);
    let mut state = NewtonState {
        dual,
        phi1,
        phi2,
        phi_norm,
        inner,
        iteration: 0,
        j_history: Vec::new(),
    };
    let stop = cfg.phi_tol * ((2 * inst.n()) as f64).sqrt();
    let mut trace = vec![phi_norm];
    let mut message = None;
    let mut fallback_steps = 0;

    let status = loop {
        if state.phi_norm <= stop {
            break Status::Converged;
        }
        if state.iteration >= cfg.max_outer {
            break Status::MaxIter;
        }
        let flip = |mut d: (Vec<f64>, Vec<f64>)| {
            if cfg.flip_direction {
                d.0.iter_mut().chain(d.1.iter_mut()).for_each(|v| *v = -*v);
            }
            d
        };
        let plain = line_search(inst, &state, &flip(newton_direction(inst, &state)), cfg);
        let stalled = match &plain {
            Ok(step) => step.j > cfg.stall_j,
            Err(_) => true,
        };
        let mut fell_back = false;
        let outcome = if stalled && cfg.jacobian_fallback {
            let full = jacobian_direction(inst, &state, &cfg.inner_cfg)
                .and_then(|d| line_search(inst, &state, &flip(d), cfg));
            match full {
                Ok(step) if step.j <= cfg.stall_j => {
                    fell_back = true;
                    Ok(step)
                }
                Ok(_) => Err(UeeError::Solver(
                    "line search stalled in both directions".into(),
                )),
                Err(e) => Err(e),
            }
        } else {
            plain
        };
        match outcome {
            Ok(step) => {
                state.dual = step.dual;
                state.phi1 = step.phi1;
                state.phi2 = step.phi2;
                state.phi_norm = step.phi_norm;
                state.inner = step.inner;
                state.iteration += 1;
                state.j_history.push(step.j);
                fallback_steps += usize::from(fell_back);
                trace.push(step.phi_norm);
                debug!(
                    "iteration {}: |phi| = {:e}, J = {}{}",
                    state.iteration,
                    step.phi_norm,
                    step.j,
                    if fell_back { " (full Jacobian)" } else { "" }
                );
            }
            Err(e) => {
                warn!("stopping after {} iterations: {e}", state.iteration);
                message = Some(e.to_string());
                break Status::Error;
            }
        }
    };

    let kkt = p2_kkt_residual(inst, &state.dual, &state.inner).max();
    let mut report =
        SolveReport::from_allocation(inst, state.inner.allocation.clone(), state.iteration, start)?;
    report.phi_norm_trace = trace;
    report.j_history = state.j_history;
    report.fallback_steps = fallback_steps;
    report.kkt_residual = Some(kkt);
    report.status = status;
    report.message = message;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Normalized residuals of the epigraph problem's KKT system at
/// `(p#, B#, β, ν)` with `λ = λ#` and `τ` recovered from bandwidth
/// stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub complementarity: f64,
    pub primal: f64,
    pub dual: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.complementarity)
            .max(self.primal)
            .max(self.dual)
    }
}

pub fn p2_kkt_residual(
    inst: &ProblemInstance,
    dual: &DualParams,
    inner: &InnerSolution,
) -> KktReport {
    let a = &inner.allocation;
    let lambda = inner.lambda_sharp;
    let mut k = KktReport::default();
    let b_sum: f64 = a.b.iter().sum();
    let b_gap = (b_sum - inst.b_total) / inst.b_total;
    k.primal = k.primal.max(b_gap.max(0.0));
    k.complementarity = k.complementarity.max(b_gap.abs());
    if !(lambda >= 0.0) {
        k.dual = f64::INFINITY;
    }

    for (n, u) in inst.users.iter().enumerate() {
        let (p, b) = (a.p[n], a.b[n]);
        let (beta, nu) = (dual.beta[n], dual.nu[n]);
        let spend = p + u.p_cir;
        let psi = u.gain_ratio() * p / b;
        let r = rate_unchecked(p, b, u);
        let rs = (r - u.r_e).max(0.0);
        let big_f = u.c * u.utility.eval_unchecked(rs);
        let df = u.c * u.utility.deriv_unchecked(rs);

        k.stationarity = k.stationarity.max((nu * spend - 1.0).abs());
        let epi = big_f - beta * spend;
        let epi_scale = big_f.abs().max(beta * spend);
        k.complementarity = k.complementarity.max(epi.abs() / epi_scale);
        k.primal = k.primal.max((-epi).max(0.0) / epi_scale);
        k.primal = k.primal.max((u.r_min - r).max(0.0) / u.r_min);

        if !df.is_finite() {
            continue;
        }
        let r_p = u.gain_ratio() / ((1.0 + psi) * LN_2);
        let r_b = psi.ln_1p() / LN_2 - psi / ((1.0 + psi) * LN_2);
        let tau = lambda / r_b - nu * df;
        let scale = nu * df + tau.abs();
        k.stationarity = k
            .stationarity
            .max((nu * beta - (nu * df + tau) * r_p).abs() / (nu * beta));
        k.dual = k.dual.max((-tau).max(0.0) / scale);
        k.complementarity = k
            .complementarity
            .max(tau.abs() / scale * (r - u.r_min).abs() / u.r_min);
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uee, UserParams};
    use crate::utility::UtilitySpec;
    use approx::assert_relative_eq;

    fn user(g: f64, utility: UtilitySpec) -> UserParams {
        UserParams {
            g,
            sigma2: 4e-21,
            p_cir: 1.6e-3,
            r_min: 2e4,
            r_e: 2e4,
            c: 1.0,
            utility,
        }
    }

    #[test]
    fn init_dual_formula() {
        let mut u = user(1.0, UtilitySpec::type3(1.0, 0.5, 0.0));
        u.sigma2 = 1.0;
        u.p_cir = 1.0;
        u.r_min = 1.0;
        u.r_e = 0.0;
        // p = 1, B = 1 gives r = 1, F = 1.
        let inst = ProblemInstance::new(vec![u], 1.0).unwrap();
        let a = Allocation {
            p: vec![1.0],
            b: vec![1.0],
        };
        let d = init_dual(&inst, &a).unwrap();
        assert_relative_eq!(d.beta[0], 0.5);
        assert_relative_eq!(d.nu[0], 0.5);

        let bad = Allocation {
            p: vec![0.1],
            b: vec![1.0],
        };
        assert!(init_dual(&inst, &bad).is_err());
    }

    #[test]
    fn direction_zero_at_fixed_point() {
        let u = user(1e-10, UtilitySpec::type3(1.0, 0.5, 0.0));
        let inst = ProblemInstance::new(vec![u.clone(), u], 2e6).unwrap();
        let rep = solve(&inst, &NewtonConfig::default()).unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert!(rep.kkt_residual.unwrap() < 1e-6);
        assert_relative_eq!(rep.allocation.b[0], 1e6, max_relative = 1e-9);
        assert_relative_eq!(
            rep.allocation.p[0],
            rep.allocation.p[1],
            max_relative = 1e-9
        );
    }

    #[test]
    fn single_user_matches_scan() {
        let u = user(3e-11, UtilitySpec::type3(1.0, 0.5, 0.0));
        let inst = ProblemInstance::new(vec![u.clone()], 1e6).unwrap();
        let rep = solve(&inst, &NewtonConfig::default()).unwrap();
        assert_eq!(rep.status, Status::Converged);
        let mut best: f64 = 0.0;
        for k in 0..20000 {
            let p = 10f64.powf(-6.0 + 7.0 * k as f64 / 19999.0);
            if let Ok(v) = uee(p, 1e6, &u) {
                best = best.max(v);
            }
        }
        assert!(
            rep.objective >= best * (1.0 - 1e-9),
            "{} vs {best}",
            rep.objective
        );
    }

    #[test]
    fn flipped_direction_fails_line_search() {
        let u = user(1e-10, UtilitySpec::type3(1.0, 0.5, 0.0));
        let inst = ProblemInstance::new(vec![u.clone(), u], 2e6).unwrap();
        let cfg = NewtonConfig {
            flip_direction: true,
            max_linesearch: 20,
            ..Default::default()
        };
        let rep = solve(&inst, &cfg).unwrap();
        assert_eq!(rep.status, Status::Error);
    }

    #[test]
    fn config_validation() {
        let cfg = NewtonConfig {
            xi: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
