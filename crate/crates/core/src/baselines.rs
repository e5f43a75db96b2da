//! Comparison algorithms: power-only with an equal bandwidth split,
//! bandwidth-only at fixed powers, and alternating optimization between
//! the two.

use std::f64::consts::LN_2;
use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, UeeError};
use crate::model::{
    default_allocation, power_for_rate, rate_d_bandwidth, rate_d_power, rate_unchecked,
    weighted_sum_uee, Allocation, ProblemInstance, UserParams,
};
use crate::outer::{SolveReport, Status};
use crate::special::{find_root_decreasing, lambert_w0, lambert_w0_exp, maximize_from, RootConfig};
use crate::utility::UtilitySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Per-user power held by the bandwidth-only baseline (W).
    pub fixed_power: f64,
    /// Alternating optimization stops below this relative improvement.
    pub ao_rel_tol: f64,
    pub ao_max_rounds: usize,
    pub root_cfg: RootConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            fixed_power: 1e-3,
            ao_rel_tol: 1e-4,
            ao_max_rounds: 200,
            root_cfg: RootConfig::precise(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_power > 0.0 && self.ao_rel_tol > 0.0 && self.ao_max_rounds > 0) {
            return domain("baseline settings must be positive");
        }
        self.root_cfg.validate()
    }
}

/// Least power meeting `r_min` over bandwidth `b`.
pub fn p_min_for(b: f64, u: &UserParams) -> f64 {
    power_for_rate(u.r_min, b, u)
}

fn uee_unchecked(p: f64, b: f64, u: &UserParams) -> f64 {
    let rs = (rate_unchecked(p, b, u) - u.r_e).max(0.0);
    u.utility.eval_unchecked(rs) / (p + u.p_cir)
}

/// `∂r/∂p·(p + p_cir)`: UEE is stationary where `f'(r_s)·D = f(r_s)`.
fn d_term(p: f64, b: f64, u: &UserParams) -> f64 {
    rate_d_power(p, b, u) * (p + u.p_cir)
}

/// Negative while UEE increases in `p`, positive once it decreases.
fn slope_sign(p: f64, b: f64, u: &UserParams) -> Option<f64> {
    let rs = (rate_unchecked(p, b, u) - u.r_e).max(0.0);
    let d = d_term(p, b, u);
    match u.utility {
        UtilitySpec::Type1 { a, b: b1, .. } => {
            let w = lambert_w0(a * d).ok()?;
            Some((b1 + a * rs).ln() - w)
        }
        UtilitySpec::Type2 { a, c, .. } => Some((a * rs - c) - (a * d).ln_1p()),
        UtilitySpec::Type3 { a, d: d3, .. } => Some((rs + d3) - a * d),
        UtilitySpec::Custom(_) => None,
    }
}

/// UEE-maximizing power at fixed bandwidth subject to `r >= r_min`.
///
/// Type1 and Type2 solve their stationarity equations by bracketed
/// bisection (Type2 in log form to avoid overflow), Type3 uses a Lambert W
/// closed form and custom utilities fall back to golden-section search.
pub fn optimize_power_given_bandwidth(u: &UserParams, b: f64, cfg: &RootConfig) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return domain(format!("bandwidth must be positive, got {b}"));
    }
    let p_min = p_min_for(b, u);
    match u.utility {
        UtilitySpec::Type3 { a, d, .. } => Ok(type3_power(u, b, a, d).max(p_min)),
        UtilitySpec::Custom(_) => {
            let (p, _) = maximize_from(|p| uee_unchecked(p, b, u), p_min, 1e-12)?;
            Ok(p.max(p_min))
        }
        _ => {
            let s0 = slope_sign(p_min, b, u).unwrap_or(f64::NAN);
            if s0.is_nan() {
                return Err(UeeError::NonFinite {
                    value: s0,
                    at: p_min,
                });
            }
            if s0 >= 0.0 {
                return Ok(p_min);
            }
            let scale = p_min.max(u.p_cir * 1e-3);
            let t = find_root_decreasing(
                |t| -slope_sign(p_min + t, b, u).unwrap_or(f64::NAN),
                0.0,
                &cfg.with_guess(scale),
            )?;
            Ok(p_min + t)
        }
    }
}

/// Type3 stationary power from `χ = exp(A + W0(z))`, `χ = 1 + g·p/(σ²B)`.
/// Returns 0 when UEE decreases for every `p`.
fn type3_power(u: &UserParams, b: f64, a: f64, d: f64) -> f64 {
    let k = a * u.g * u.p_cir / (u.sigma2 * b);
    let big_a = a + (u.r_e - d) * LN_2 / b;
    // z = (k - a)·e^{-A} is handled through ln|z|, since A can be far
    // below -700 for a large offset d and small B.
    let chi_m1 = if k > a {
        let ln_z = (k - a).ln() - big_a;
        match lambert_w0_exp(ln_z) {
            // w·e^w = z gives A + w = ln(k - a) - ln w.
            Ok(w) if ln_z > 0.0 => ((k - a).ln() - w.ln()).exp_m1(),
            Ok(w) => (big_a + w).exp_m1(),
            Err(_) => return 0.0,
        }
    } else if k < a {
        let ln_mz = (a - k).ln() - big_a;
        if ln_mz > -1.0 {
            return 0.0;
        }
        match lambert_w0(-ln_mz.exp()) {
            Ok(w) => (big_a + w).exp_m1(),
            Err(_) => return 0.0,
        }
    } else {
        big_a.exp_m1()
    };
    (chi_m1 * b * u.sigma2 / u.g).max(0.0)
}

/// Equal bandwidth split, per-user optimal power.
pub fn optimize_power_only(inst: &ProblemInstance, cfg: &BaselineConfig) -> Result<SolveReport> {
    let start = Instant::now();
    inst.validate()?;
    let b = inst.b_total / inst.n() as f64;
    let alloc = power_step(inst, &vec![b; inst.n()], &cfg.root_cfg)?;
    SolveReport::from_allocation(inst, alloc, 1, start)
}

fn power_step(inst: &ProblemInstance, b: &[f64], cfg: &RootConfig) -> Result<Allocation> {
    let p = inst
        .users
        .iter()
        .zip(b)
        .map(|(u, &bn)| optimize_power_given_bandwidth(u, bn, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Allocation { p, b: b.to_vec() })
}

/// Smallest bandwidth giving `r_min` at power `p`.
pub fn b_min_for(p: f64, u: &UserParams, cfg: &RootConfig) -> Result<f64> {
    let cap = u.gain_ratio() * p / LN_2;
    if !(cap > u.r_min) {
        return domain(format!(
            "power {p} W cannot reach r_min = {} bit/s at any bandwidth (limit {cap})",
            u.r_min
        ));
    }
    find_root_decreasing(
        |b| -rate_unchecked(p, b, u),
        -u.r_min,
        &cfg.with_guess(u.r_min),
    )
}

/// `c·∂UEE/∂B` at fixed power; `+inf` where `f'` blows up.
fn weighted_grad_b(p: f64, b: f64, u: &UserParams) -> f64 {
    let rs = (rate_unchecked(p, b, u) - u.r_e).max(0.0);
    u.c * u.utility.deriv_unchecked(rs) * rate_d_bandwidth(p, b, u) / (p + u.p_cir)
}

fn b_hat(zeta: f64, p: f64, b_min: f64, u: &UserParams, cfg: &RootConfig) -> Result<f64> {
    if weighted_grad_b(p, b_min, u) <= zeta {
        return Ok(b_min);
    }
    let t = find_root_decreasing(
        |t| weighted_grad_b(p, b_min + t, u),
        zeta,
        &cfg.with_guess(b_min),
    )?;
    Ok(b_min + t)
}

/// Bandwidth split maximizing the weighted sum at fixed powers.
///
/// The price ζ# makes `Σ max(B̂_n(ζ), B_min,n) = B_total`, where `B̂_n`
/// solves `c_n·∂UEE_n/∂B = ζ`.
pub fn optimize_bandwidth_only(
    inst: &ProblemInstance,
    p_fixed: &[f64],
    cfg: &BaselineConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    let b = bandwidth_step(inst, p_fixed, &cfg.root_cfg)?;
    SolveReport::from_allocation(
        inst,
        Allocation {
            p: p_fixed.to_vec(),
            b,
        },
        1,
        start,
    )
}

fn bandwidth_step(inst: &ProblemInstance, p: &[f64], cfg: &RootConfig) -> Result<Vec<f64>> {
    inst.validate()?;
    if p.len() != inst.n() {
        return Err(UeeError::Dimension {
            expected: inst.n(),
            got: p.len(),
        });
    }
    if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return domain(format!("fixed powers must be positive, got {bad}"));
    }
    let b_min = inst
        .users
        .iter()
        .zip(p)
        .map(|(u, &pn)| b_min_for(pn, u, cfg))
        .collect::<Result<Vec<_>>>()?;
    let floor: f64 = b_min.iter().sum();
    if floor > inst.b_total {
        return domain(format!(
            "minimum bandwidths sum to {floor} Hz, above the budget {}",
            inst.b_total
        ));
    }

    let n = inst.n() as f64;
    let log_ref: f64 = inst
        .users
        .iter()
        .zip(p)
        .zip(&b_min)
        .map(|((u, &pn), &bm)| weighted_grad_b(pn, bm.max(inst.b_total / n), u).ln())
        .sum::<f64>()
        / n;
    let zeta_ref = log_ref.exp();
    if !(zeta_ref > 0.0 && zeta_ref.is_finite()) {
        return Err(UeeError::Solver(format!("bad initial price {zeta_ref}")));
    }

    let mut failure = None;
    let mut total = |zeta: f64| -> f64 {
        let mut s = 0.0;
        for ((u, &pn), &bm) in inst.users.iter().zip(p).zip(&b_min) {
            match b_hat(zeta, pn, bm, u, cfg) {
                Ok(bh) => s += bh.max(bm),
                Err(e) => {
                    failure = Some(e);
                    return f64::NAN;
                }
            }
        }
        s
    };
    let zeta = find_root_decreasing(&mut total, inst.b_total, &cfg.with_guess(zeta_ref));
    if let Some(e) = failure {
        return Err(e);
    }
    let zeta = zeta?;

    let mut b = Vec::with_capacity(inst.n());
    for ((u, &pn), &bm) in inst.users.iter().zip(p).zip(&b_min) {
        b.push(b_hat(zeta, pn, bm, u, cfg)?.max(bm));
    }
    let used: f64 = b.iter().sum();
    let scale = inst.b_total / used;
    b.iter_mut().for_each(|v| *v *= scale);
    Ok(b)
}

/// Fixed powers for the bandwidth-only baseline: `cfg.fixed_power`, raised
/// for any user that cannot reach `r_min` with it at the equal split.
pub fn bandwidth_only_powers(inst: &ProblemInstance, cfg: &BaselineConfig) -> Vec<f64> {
    let b = inst.b_total / inst.n() as f64;
    inst.users
        .iter()
        .map(|u| {
            let need = p_min_for(b, u);
            if need > cfg.fixed_power {
                debug!("raising fixed power from {} to {need} W", cfg.fixed_power);
                need
            } else {
                cfg.fixed_power
            }
        })
        .collect()
}

/// Bandwidth-only baseline with [`bandwidth_only_powers`].
pub fn bandwidth_only_baseline(
    inst: &ProblemInstance,
    cfg: &BaselineConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    let p = bandwidth_only_powers(inst, cfg);
    let mut rep = optimize_bandwidth_only(inst, &p, cfg)?;
    rep.wall_time = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// Alternates power-only and bandwidth-only steps from the equal-split
/// point with rates at `2·r_min`.
///
/// `phi_norm_trace` of the report holds the objective after every
/// half-step.
pub fn alternating(inst: &ProblemInstance, cfg: &BaselineConfig) -> Result<SolveReport> {
    let start = Instant::now();
    inst.validate()?;
    cfg.validate()?;
    let mut alloc = default_allocation(inst);
    let mut obj = weighted_sum_uee(&alloc, inst)?;
    let mut trace = vec![obj];
    let mut rounds = 0;
    let mut status = Status::MaxIter;
    while rounds < cfg.ao_max_rounds {
        rounds += 1;
        let half = power_step(inst, &alloc.b, &cfg.root_cfg)?;
        let obj_half = weighted_sum_uee(&half, inst)?;
        let b = bandwidth_step(inst, &half.p, &cfg.root_cfg)?;
        let next = Allocation { p: half.p, b };
        let obj_next = weighted_sum_uee(&next, inst)?;
        trace.push(obj_half);
        trace.push(obj_next);
        if obj_half < obj * (1.0 - 1e-12) || obj_next < obj_half * (1.0 - 1e-12) {
            warn!("alternating step lowered the objective: {obj} -> {obj_half} -> {obj_next}");
        }
        let gain = (obj_next - obj) / obj.abs();
        alloc = next;
        obj = obj_next;
        if gain < cfg.ao_rel_tol {
            status = Status::Converged;
            break;
        }
    }
    let mut rep = SolveReport::from_allocation(inst, alloc, rounds, start)?;
    rep.phi_norm_trace = trace;
    rep.status = status;
    Ok(rep)
}
