//! Closed-form solve of the parametric subproblem
//!
//! ```text
//! max Σ ν_n·(c_n·f_n(r_n − r_e,n) − β_n·(p_n + p_cir,n))
//! s.t. ΣB_n ≤ B_total, r_n ≥ r_min,n
//! ```
//!
//! For a bandwidth price λ each user's optimal SNR `ψ` solves
//! `(1+ψ)·ln(1+ψ) − ψ = g·λ/(ν·β·σ²)`, its rate is `max(γ, r_min)` and its
//! bandwidth follows. The price λ# that exhausts `B_total` is found by
//! bisection.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, UeeError};
use crate::model::{Allocation, ProblemInstance, UserParams};
use crate::special::{find_root_decreasing, lambert_w0, RootConfig};

/// Multipliers `(β, ν)` of the outer fixed-point system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualParams {
    pub beta: Vec<f64>,
    pub nu: Vec<f64>,
}

impl DualParams {
    /// Rejects non-positive or non-finite entries.
    pub fn new(beta: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let d = DualParams { beta, nu };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.nu.len() {
            return Err(UeeError::Dimension {
                expected: self.beta.len(),
                got: self.nu.len(),
            });
        }
        for (n, (&b, &v)) in self.beta.iter().zip(&self.nu).enumerate() {
            if !(b > 0.0 && b.is_finite()) {
                return domain(format!("beta[{n}] = {b} must be positive"));
            }
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("nu[{n}] = {v} must be positive"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub allocation: Allocation,
    pub lambda_sharp: f64,
    pub gamma: Vec<f64>,
    pub psi: Vec<f64>,
    /// Whether `r_min` rather than `γ` set the user's rate.
    pub binding_min_rate: Vec<bool>,
}

/// `(1+ψ)·ln(1+ψ) − ψ`, accurate for small ψ.
pub(crate) fn psi_residual_lhs(psi: f64) -> f64 {
    if psi < 0.05 {
        // Σ_{k≥2} (−1)^k ψ^k / (k(k−1))
        let mut term = psi * psi;
        let mut sum = 0.0;
        for k in 2..18 {
            let kf = k as f64;
            sum += term / (kf * (kf - 1.0));
            term *= -psi;
        }
        sum
    } else {
        (1.0 + psi) * psi.ln_1p() - psi
    }
}

/// Solves `(1+ψ)·ln(1+ψ) − ψ = x` for `ψ >= 0`.
pub(crate) fn psi_from_ratio(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return domain(format!("psi ratio {x} must be >= 0"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut psi = if x < 1e-6 {
        (2.0 * x).sqrt()
    } else {
        let w = lambert_w0((x - 1.0) / E)?;
        (1.0 + w).exp_m1()
    };
    // Newton polish; the map is convex so iterates approach from above.
    for _ in 0..8 {
        let h = psi_residual_lhs(psi) - x;
        let dh = psi.ln_1p();
        if dh <= 0.0 {
            break;
        }
        let step = h / dh;
        let next = (psi - step).max(0.5 * psi);
        let done = (next - psi).abs() <= 2.0 * f64::EPSILON * psi;
        psi = next;
        if done {
            break;
        }
    }
    Ok(psi)
}

fn check_dual(beta_n: f64, nu_n: f64) -> Result<()> {
    if !(beta_n > 0.0 && nu_n > 0.0 && beta_n.is_finite() && nu_n.is_finite()) {
        return domain(format!("need positive duals, got beta={beta_n}, nu={nu_n}"));
    }
    Ok(())
}

/// Optimal SNR `g·p/(σ²·B)` at bandwidth price `lambda`.
pub fn psi(lambda: f64, u: &UserParams, beta_n: f64, nu_n: f64) -> Result<f64> {
    check_dual(beta_n, nu_n)?;
    if !(lambda >= 0.0) || lambda.is_infinite() {
        return domain(format!("lambda {lambda} must be finite and >= 0"));
    }
    psi_from_ratio(u.g * lambda / (nu_n * beta_n * u.sigma2))
}

fn gamma_from_psi(psi: f64, u: &UserParams, beta_n: f64) -> f64 {
    let v = beta_n * u.sigma2 * (1.0 + psi) * LN_2 / (u.c * u.g);
    match u.utility.deriv_inverse_unchecked(v) {
        Some(xi) => u.r_e + xi,
        None => u.r_e,
    }
}

/// Rate the user would pick without the `r_min` floor; never below `r_e`.
pub fn gamma(lambda: f64, u: &UserParams, beta_n: f64, nu_n: f64) -> Result<f64> {
    let psi = psi(lambda, u, beta_n, nu_n)?;
    let v = beta_n * u.sigma2 * (1.0 + psi) * LN_2 / (u.c * u.g);
    let xi = u.utility.deriv_inverse(v)?;
    Ok(u.r_e + xi.unwrap_or(0.0))
}

/// Bandwidth the user takes at price `lambda`: `max(γ, r_min)/log2(1+ψ)`.
pub fn bandwidth_at(lambda: f64, u: &UserParams, beta_n: f64, nu_n: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("bandwidth_at needs lambda > 0, got {lambda}"));
    }
    let psi = psi(lambda, u, beta_n, nu_n)?;
    let g = gamma_from_psi(psi, u, beta_n);
    Ok(g.max(u.r_min) * LN_2 / psi.ln_1p())
}

struct UserAt {
    psi: f64,
    gamma: f64,
    b: f64,
}

fn user_at(lambda: f64, u: &UserParams, beta_n: f64, nu_n: f64) -> UserAt {
    let x = u.g * lambda / (nu_n * beta_n * u.sigma2);
    let psi = psi_from_ratio(x).unwrap_or(f64::NAN);
    let gamma = gamma_from_psi(psi, u, beta_n);
    let b = gamma.max(u.r_min) * LN_2 / psi.ln_1p();
    UserAt { psi, gamma, b }
}

/// Geometric mean of `ν·β·σ²/g`: the price where every user's ratio is
/// about one.
pub fn lambda_ref(inst: &ProblemInstance, dual: &DualParams) -> f64 {
    let n = inst.n() as f64;
    let s: f64 = inst
        .users
        .iter()
        .zip(dual.beta.iter().zip(&dual.nu))
        .map(|(u, (&b, &v))| (v * b * u.sigma2 / u.g).ln())
        .sum();
    (s / n).exp()
}

/// `Ψ(λ) = Σ_n 𝓑_n(λ)`.
pub fn total_bandwidth(lambda: f64, inst: &ProblemInstance, dual: &DualParams) -> f64 {
    inst.users
        .iter()
        .zip(dual.beta.iter().zip(&dual.nu))
        .map(|(u, (&b, &v))| user_at(lambda, u, b, v).b)
        .sum()
}

/// Global solution of the parametric subproblem for fixed `dual`.
///
/// `cfg.initial_guess` is overridden by [`lambda_ref`]. Any bandwidth left
/// by the one-sided bisection is handed out in proportion to `B_n` with
/// `ψ_n` held fixed, so `ΣB_n == B_total` up to rounding and each rate
/// only grows.
pub fn solve_p3(
    inst: &ProblemInstance,
    dual: &DualParams,
    cfg: &RootConfig,
) -> Result<InnerSolution> {
    if dual.len() != inst.n() {
        return Err(UeeError::Dimension {
            expected: inst.n(),
            got: dual.len(),
        });
    }
    dual.validate()?;
    let guess = lambda_ref(inst, dual);
    if !(guess > 0.0 && guess.is_finite()) {
        return Err(UeeError::Solver(format!("bad initial price {guess}")));
    }
    let cfg = cfg.with_guess(guess);
    let lambda = find_root_decreasing(|l| total_bandwidth(l, inst, dual), inst.b_total, &cfg)
        .map_err(|e| UeeError::Solver(format!("bandwidth price search failed: {e}")))?;

    let users: Vec<UserAt> = inst
        .users
        .iter()
        .zip(dual.beta.iter().zip(&dual.nu))
        .map(|(u, (&b, &v))| user_at(lambda, u, b, v))
        .collect();
    let used: f64 = users.iter().map(|s| s.b).sum();
    let scale = inst.b_total / used;
    let mut p = Vec::with_capacity(inst.n());
    let mut b = Vec::with_capacity(inst.n());
    for (s, u) in users.iter().zip(&inst.users) {
        let bn = s.b * scale;
        b.push(bn);
        p.push(bn * s.psi / u.gain_ratio());
    }
    Ok(InnerSolution {
        allocation: Allocation { p, b },
        lambda_sharp: lambda,
        gamma: users.iter().map(|s| s.gamma).collect(),
        psi: users.iter().map(|s| s.psi).collect(),
        binding_min_rate: users
            .iter()
            .zip(&inst.users)
            .map(|(s, u)| s.gamma < u.r_min)
            .collect(),
    })
}
