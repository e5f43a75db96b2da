//! Self-checks behind the `validate` command.

use uee_core::baselines::{alternating, bandwidth_only_baseline, optimize_power_only};
use uee_core::inner::{lambda_ref, total_bandwidth, DualParams};
use uee_core::model::{default_allocation, power_for_rate, uee, ProblemInstance};
use uee_core::outer::{eval_phi, init_dual, solve, Status};
use uee_core::scenario::{generate, preset_utility, ScenarioSpec, PRESET_NAMES};
use uee_core::utility::validate_spec;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

/// Runs every check on instances drawn from `cfg.scenario`.
pub fn run_checks(cfg: &RunConfig, inject_fault: bool) -> Vec<Check> {
    let mut cfg = cfg.clone();
    cfg.newton.flip_direction = inject_fault;
    let spec = &cfg.scenario;
    let inst = match generate(spec) {
        Ok(i) => i,
        Err(e) => return vec![check("scenario", Err(e.to_string()))],
    };
    let small = |n: usize| {
        generate(&ScenarioSpec {
            n_users: n,
            ..spec.clone()
        })
    };

    let mut out = Vec::new();
    let rep = solve(&inst, &cfg.newton);
    out.push(check(
        "kkt_residual",
        match &rep {
            Ok(r) => match r.kkt_residual {
                Some(k) if k <= 1e-4 => Ok(format!("{k:.2e} <= 1e-4")),
                Some(k) => Err(format!("{k:.2e} > 1e-4")),
                None => Err("missing".into()),
            },
            Err(e) => Err(e.to_string()),
        },
    ));
    out.push(check(
        "contraction",
        match &rep {
            Ok(r) => contraction(r, &cfg),
            Err(e) => Err(e.to_string()),
        },
    ));
    out.push(check("psi_monotone", psi_monotone(&inst)));
    out.push(check(
        "phi_derivative_identity",
        small(1)
            .map_err(|e| e.to_string())
            .and_then(|i| derivative_identity(&i, &cfg)),
    ));
    out.push(check(
        "oracle_n1",
        small(1)
            .map_err(|e| e.to_string())
            .and_then(|i| oracle(&i, &cfg)),
    ));
    out.push(check(
        "oracle_n2",
        small(2)
            .map_err(|e| e.to_string())
            .and_then(|i| oracle(&i, &cfg)),
    ));
    out.push(check("utility_presets", presets(&inst)));
    out.push(check(
        "baseline_dominance",
        match &rep {
            Ok(r) => dominance(&inst, r.objective, &cfg),
            Err(e) => Err(e.to_string()),
        },
    ));
    out
}

fn contraction(r: &uee_core::outer::SolveReport, cfg: &RunConfig) -> Result<String, String> {
    if r.status != Status::Converged {
        return Err(format!(
            "status {}: {}",
            r.status.as_str(),
            r.message.clone().unwrap_or_default()
        ));
    }
    for (k, w) in r.phi_norm_trace.windows(2).enumerate() {
        let t = cfg.newton.xi.powi(r.j_history[k] as i32);
        if w[1] > (1.0 - t * cfg.newton.epsilon) * w[0] {
            return Err(format!("step {k}: {:e} -> {:e}", w[0], w[1]));
        }
    }
    Ok(format!("{} accepted steps", r.outer_iterations))
}

fn psi_monotone(inst: &ProblemInstance) -> Result<String, String> {
    let a0 = default_allocation(inst);
    let dual = init_dual(inst, &a0).map_err(|e| e.to_string())?;
    let l0 = lambda_ref(inst, &dual);
    let grid: Vec<f64> = (0..=100)
        .map(|k| l0 * 10f64.powf(-9.0 + 0.18 * k as f64))
        .collect();
    let vals: Vec<f64> = grid
        .iter()
        .map(|&l| total_bandwidth(l, inst, &dual))
        .collect();
    if let Some(k) = vals.windows(2).position(|w| !(w[1] < w[0])) {
        return Err(format!("not decreasing at lambda = {:e}", grid[k + 1]));
    }
    let (first, last) = (vals[0], vals[100]);
    if !(first > 1e3 * inst.b_total && last < 1e-2 * inst.b_total) {
        return Err(format!("limits {first:e}, {last:e}"));
    }
    Ok(format!("{first:.3e} .. {last:.3e} Hz"))
}

/// Central differences of `φ1_n` in `β_n` and `φ2_n` in `ν_n` against
/// `p_n# + p_cir` on a grid of multipliers around the starting point.
fn derivative_identity(inst: &ProblemInstance, cfg: &RunConfig) -> Result<String, String> {
    let a0 = default_allocation(inst);
    let d0 = init_dual(inst, &a0).map_err(|e| e.to_string())?;
    let ic = &cfg.newton.inner_cfg;
    let mut worst: f64 = 0.0;
    for fb in [0.5, 0.8, 1.0, 1.25, 2.0] {
        for fv in [0.5, 0.8, 1.0, 1.25, 2.0] {
            let beta: Vec<f64> = d0.beta.iter().map(|b| b * fb).collect();
            let nu: Vec<f64> = d0.nu.iter().map(|v| v * fv).collect();
            let at = |beta: Vec<f64>, nu: Vec<f64>| {
                DualParams::new(beta, nu)
                    .and_then(|d| eval_phi(inst, &d, ic))
                    .map_err(|e| e.to_string())
            };
            let (_, _, base) = at(beta.clone(), nu.clone())?;
            for n in 0..inst.n() {
                let spend = base.allocation.p[n] + inst.users[n].p_cir;
                let hb = 1e-6 * beta[n];
                let mut bp = beta.clone();
                let mut bm = beta.clone();
                bp[n] += hb;
                bm[n] -= hb;
                let d1 = (at(bp, nu.clone())?.0[n] - at(bm, nu.clone())?.0[n]) / (2.0 * hb);
                let hv = 1e-6 * nu[n];
                let mut vp = nu.clone();
                let mut vm = nu.clone();
                vp[n] += hv;
                vm[n] -= hv;
                let d2 = (at(beta.clone(), vp)?.1[n] - at(beta.clone(), vm)?.1[n]) / (2.0 * hv);
                worst = worst
                    .max((d1 - spend).abs() / spend)
                    .max((d2 - spend).abs() / spend);
            }
        }
    }
    if worst <= 1e-3 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} > 1e-3"))
    }
}

fn best_power_uee(inst: &ProblemInstance, n: usize, b: f64, points: usize) -> f64 {
    let u = &inst.users[n];
    let lo = power_for_rate(u.r_min, b, u);
    let (a, z) = (lo.ln(), (lo * 1e4).max(10.0).ln());
    (0..points)
        .filter_map(|k| uee((a + (z - a) * k as f64 / (points - 1) as f64).exp(), b, u).ok())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Grid search over the bandwidth split and powers for one or two users.
fn oracle(inst: &ProblemInstance, cfg: &RunConfig) -> Result<String, String> {
    let rep = solve(inst, &cfg.newton).map_err(|e| e.to_string())?;
    let bt = inst.b_total;
    let grid = match inst.n() {
        1 => inst.users[0].c * best_power_uee(inst, 0, bt, 10_000),
        2 => (1..200)
            .map(|k| {
                let b1 = bt * k as f64 / 200.0;
                inst.users[0].c * best_power_uee(inst, 0, b1, 400)
                    + inst.users[1].c * best_power_uee(inst, 1, bt - b1, 400)
            })
            .fold(f64::NEG_INFINITY, f64::max),
        n => return Err(format!("no grid for {n} users")),
    };
    if rep.objective >= grid * (1.0 - 1e-2) {
        Ok(format!("solver {:.6e}, grid {grid:.6e}", rep.objective))
    } else {
        Err(format!(
            "solver {:.6e} below grid {grid:.6e}",
            rep.objective
        ))
    }
}

fn presets(inst: &ProblemInstance) -> Result<String, String> {
    let mut names = Vec::new();
    for name in PRESET_NAMES {
        let p = preset_utility(name).map_err(|e| e.to_string())?;
        let report = validate_spec(&p.spec);
        if !report.passed() {
            return Err(format!("{name}: {:?}", report.failures.first()));
        }
        names.push(name);
    }
    for (n, u) in inst.users.iter().enumerate() {
        let report = validate_spec(&u.utility);
        if !report.passed() {
            return Err(format!("user {n}: {:?}", report.failures.first()));
        }
    }
    Ok(format!(
        "{} presets and {} configured users",
        names.len(),
        inst.n()
    ))
}

fn dominance(inst: &ProblemInstance, best: f64, cfg: &RunConfig) -> Result<String, String> {
    let b = &cfg.baselines;
    let runs = [
        ("ao", alternating(inst, b)),
        ("p_only", optimize_power_only(inst, b)),
        ("b_only", bandwidth_only_baseline(inst, b)),
    ];
    for (name, r) in runs {
        let r = r.map_err(|e| format!("{name}: {e}"))?;
        if r.objective > best * (1.0 + 1e-6) {
            return Err(format!(
                "{name} {:.6e} above proposed {best:.6e}",
                r.objective
            ));
        }
    }
    Ok(format!("proposed {best:.6e} on top"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.scenario.n_users = 8;
        cfg
    }

    #[test]
    fn all_pass_on_defaults() {
        for c in run_checks(&small_cfg(), false) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn injected_fault_breaks_contraction() {
        let checks = run_checks(&small_cfg(), true);
        let c = checks.iter().find(|c| c.name == "contraction").unwrap();
        assert!(!c.passed);
    }
}
