//! Physical-layer quantities: Shannon rate, secrecy rate, utility-energy
//! efficiency (UEE) and the weighted-sum problem instance.
//!
//! Everything is in SI units: W, Hz, bit/s, W/Hz.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, UeeError};
use crate::utility::UtilitySpec;

/// One user's channel, security and economic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserParams {
    /// Linear channel gain.
    pub g: f64,
    /// Noise power spectral density (W/Hz).
    pub sigma2: f64,
    /// Circuit power (W).
    pub p_cir: f64,
    /// Minimum rate (bit/s).
    pub r_min: f64,
    /// Eavesdropper rate (bit/s).
    pub r_e: f64,
    /// Priority weight.
    pub c: f64,
    pub utility: UtilitySpec,
}

impl UserParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("g", self.g),
            ("sigma2", self.sigma2),
            ("p_cir", self.p_cir),
            ("r_min", self.r_min),
            ("c", self.c),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.r_e >= 0.0 && self.r_e <= self.r_min) {
            return domain(format!(
                "need 0 <= r_e <= r_min, got r_e={} r_min={}",
                self.r_e, self.r_min
            ));
        }
        self.utility.check_params()
    }

    /// `g / σ²`, the SNR per watt per hertz.
    pub(crate) fn gain_ratio(&self) -> f64 {
        self.g / self.sigma2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub users: Vec<UserParams>,
    pub b_total: f64,
}

impl ProblemInstance {
    pub fn new(users: Vec<UserParams>, b_total: f64) -> Result<Self> {
        let inst = ProblemInstance { users, b_total };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return domain("instance needs at least one user");
        }
        if !(self.b_total > 0.0 && self.b_total.is_finite()) {
            return domain(format!("b_total must be positive, got {}", self.b_total));
        }
        self.users.iter().try_for_each(UserParams::validate)
    }

    pub fn n(&self) -> usize {
        self.users.len()
    }
}

/// Per-user transmit powers and bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub p: Vec<f64>,
    pub b: Vec<f64>,
}

impl Allocation {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    fn check_dims(&self, n: usize) -> Result<()> {
        for got in [self.p.len(), self.b.len()] {
            if got != n {
                return Err(UeeError::Dimension { expected: n, got });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `b_total − ΣB` (Hz); negative when over budget.
    pub bandwidth_slack: f64,
    /// `max(r_min − r, 0)` per user (bit/s).
    pub rate_violations: Vec<f64>,
    pub is_feasible: bool,
}

fn check_pb(p: f64, b: f64) -> Result<()> {
    if !(p >= 0.0 && p.is_finite()) {
        return domain(format!("power must be finite and >= 0, got {p}"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return domain(format!("bandwidth must be finite and > 0, got {b}"));
    }
    Ok(())
}

/// Shannon rate `B·log2(1 + g·p/(σ²·B))`.
pub fn rate(p: f64, b: f64, u: &UserParams) -> Result<f64> {
    check_pb(p, b)?;
    Ok(rate_unchecked(p, b, u))
}

pub(crate) fn rate_unchecked(p: f64, b: f64, u: &UserParams) -> f64 {
    b * (u.gain_ratio() * p / b).ln_1p() / LN_2
}

/// `∂rate/∂B = (ln(1+ψ) − ψ/(1+ψ))/ln 2` with `ψ = g·p/(σ²·B)`.
pub(crate) fn rate_d_bandwidth(p: f64, b: f64, u: &UserParams) -> f64 {
    let psi = u.gain_ratio() * p / b;
    let v = if psi < 0.05 {
        // Σ_{k≥2} (−1)^k (k−1)/k ψ^k
        let mut term = psi * psi;
        let mut sum = 0.0;
        for k in 2..20 {
            let kf = k as f64;
            sum += term * (kf - 1.0) / kf;
            term *= -psi;
        }
        sum
    } else {
        psi.ln_1p() - psi / (1.0 + psi)
    };
    v / LN_2
}

/// `∂rate/∂p = g·B/((σ²·B + g·p)·ln 2)`.
pub(crate) fn rate_d_power(p: f64, b: f64, u: &UserParams) -> f64 {
    u.gain_ratio() / ((1.0 + u.gain_ratio() * p / b) * LN_2)
}

/// `rate − r_e`. Negative below the eavesdropper's rate.
pub fn secrecy_rate(p: f64, b: f64, u: &UserParams) -> Result<f64> {
    Ok(rate(p, b, u)? - u.r_e)
}

/// `f(r_s) / (p + p_cir)`.
///
/// Secrecy rates within rounding of zero (relative `1e-9` of the larger of
/// `r_e` and `r_min`) count as zero; a user held exactly at `r_min = r_e`
/// lands there.
pub fn uee(p: f64, b: f64, u: &UserParams) -> Result<f64> {
    let rs = secrecy_rate(p, b, u)?;
    let slack = 1e-9 * u.r_e.max(u.r_min);
    let f = u.utility.eval(rs.max(0.0)).and_then(|f| {
        if rs < -slack {
            domain(format!("secrecy rate {rs} is negative"))
        } else {
            Ok(f)
        }
    })?;
    Ok(f / (p + u.p_cir))
}

/// `Σ c_n·uee_n`.
pub fn weighted_sum_uee(a: &Allocation, inst: &ProblemInstance) -> Result<f64> {
    a.check_dims(inst.n())?;
    let mut total = 0.0;
    for ((&p, &b), u) in a.p.iter().zip(&a.b).zip(&inst.users) {
        total += u.c * uee(p, b, u)?;
    }
    Ok(total)
}

/// Per-user UEE values (unweighted).
pub fn per_user_uee(a: &Allocation, inst: &ProblemInstance) -> Result<Vec<f64>> {
    a.check_dims(inst.n())?;
    a.p.iter()
        .zip(&a.b)
        .zip(&inst.users)
        .map(|((&p, &b), u)| uee(p, b, u))
        .collect()
}

/// Bandwidth and rate feasibility.
///
/// `tol_rate` is an absolute rate tolerance; `None` uses `1e-6·r_min` per
/// user. Bandwidth may exceed the budget by `1e-9·b_total`.
pub fn check_feasible(
    a: &Allocation,
    inst: &ProblemInstance,
    tol_rate: Option<f64>,
) -> Result<FeasibilityReport> {
    a.check_dims(inst.n())?;
    let slack = inst.b_total - a.b.iter().sum::<f64>();
    let mut ok = slack >= -1e-9 * inst.b_total;
    let mut viol = Vec::with_capacity(inst.n());
    for ((&p, &b), u) in a.p.iter().zip(&a.b).zip(&inst.users) {
        let v = match rate(p, b, u) {
            Ok(r) => (u.r_min - r).max(0.0),
            Err(_) => u.r_min,
        };
        let tol = tol_rate.unwrap_or(1e-6 * u.r_min);
        ok &= v <= tol && p > 0.0 && b > 0.0;
        viol.push(v);
    }
    Ok(FeasibilityReport {
        bandwidth_slack: slack,
        rate_violations: viol,
        is_feasible: ok,
    })
}

/// Power that achieves exactly `target` bit/s over bandwidth `b`.
pub fn power_for_rate(target: f64, b: f64, u: &UserParams) -> f64 {
    (target * LN_2 / b).exp_m1() * b / u.gain_ratio()
}

/// The equal-split point with every rate at `2·r_min`.
pub fn default_allocation(inst: &ProblemInstance) -> Allocation {
    let b = inst.b_total / inst.n() as f64;
    let p = inst
        .users
        .iter()
        .map(|u| power_for_rate(2.0 * u.r_min, b, u))
        .collect();
    Allocation {
        p,
        b: vec![b; inst.n()],
    }
}
