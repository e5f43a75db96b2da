mod common;

use common::*;
use uee_core::baselines::{
    alternating, bandwidth_only_baseline, optimize_bandwidth_only, optimize_power_given_bandwidth,
    optimize_power_only, BaselineConfig,
};
use uee_core::inner::{solve_p3, DualParams};
use uee_core::model::{check_feasible, Allocation, ProblemInstance, UserParams};
use uee_core::outer::{solve, NewtonConfig, Status};
use uee_core::special::RootConfig;
use uee_core::utility::UtilitySpec;

#[test]
fn outer_matches_grid_single_user() {
    for seed in 0..10 {
        let inst = instance(seed, 1);
        let rep = solve(&inst, &NewtonConfig::default()).unwrap();
        let oracle = grid_oracle_n1(&inst, 20_000);
        assert!(
            rep.objective >= oracle * (1.0 - 1e-6),
            "seed {seed}: {} < {oracle}",
            rep.objective
        );
        assert!(
            rep.objective <= oracle * (1.0 + 1e-4),
            "seed {seed}: {} >> {oracle}",
            rep.objective
        );
    }
}

#[test]
fn outer_matches_grid_two_users() {
    for seed in 0..5 {
        let inst = instance(seed, 2);
        let rep = solve(&inst, &NewtonConfig::default()).unwrap();
        let oracle = grid_oracle_n2(&inst, 400, 400);
        assert!(
            rep.objective >= oracle * (1.0 - 1e-6),
            "seed {seed}: {} < {oracle}",
            rep.objective
        );
        assert!(
            rep.objective <= oracle * (1.0 + 1e-2),
            "seed {seed}: {} >> {oracle}",
            rep.objective
        );
    }
}

fn p3_value(inst: &ProblemInstance, dual: &DualParams, a: &Allocation) -> f64 {
    inst.users
        .iter()
        .enumerate()
        .map(|(n, u)| {
            let rs = (rate_ref(a.p[n], a.b[n], u) - u.r_e).max(0.0);
            let f = u.c * u.utility.eval(rs).unwrap();
            dual.nu[n] * (f - dual.beta[n] * (a.p[n] + u.p_cir))
        })
        .sum()
}

#[test]
fn inner_matches_grid_two_users() {
    for seed in 0..4 {
        let inst = instance(seed, 2);
        let a0 = uee_core::model::default_allocation(&inst);
        let dual = uee_core::outer::init_dual(&inst, &a0).unwrap();
        let sol = solve_p3(&inst, &dual, &RootConfig::precise()).unwrap();
        let got = p3_value(&inst, &dual, &sol.allocation);

        let bt = inst.b_total;
        let per_user = |n: usize, b: f64| -> f64 {
            let u = &inst.users[n];
            let lo = p_min_ref(b, u);
            log_grid(lo, (lo * 1e4).max(10.0), 400)
                .into_iter()
                .map(|p| {
                    let rs = (rate_ref(p, b, u) - u.r_e).max(0.0);
                    dual.nu[n] * (u.c * u.utility.eval(rs).unwrap() - dual.beta[n] * (p + u.p_cir))
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let oracle = lin_grid(1e-4 * bt, (1.0 - 1e-4) * bt, 400)
            .into_iter()
            .map(|b1| per_user(0, b1) + per_user(1, bt - b1))
            .fold(f64::NEG_INFINITY, f64::max);
        let scale = oracle.abs().max(1.0);
        assert!(
            got >= oracle - 1e-6 * scale,
            "seed {seed}: {got} < {oracle}"
        );
    }
}

#[test]
fn solutions_carry_kkt_certificates() {
    for seed in 0..5 {
        for n in [1, 2, 5, 30] {
            let inst = instance(seed, n);
            let rep = solve(&inst, &NewtonConfig::default()).unwrap();
            assert_eq!(rep.status, Status::Converged);
            let kkt = rep.kkt_residual.unwrap();
            assert!(kkt <= 1e-4, "seed {seed} n {n}: kkt {kkt}");
            assert!(
                check_feasible(&rep.allocation, &inst, None)
                    .unwrap()
                    .is_feasible
            );
        }
    }
}

#[test]
fn accepted_steps_contract() {
    let cfg = NewtonConfig::default();
    for seed in 0..5 {
        let rep = solve(&instance(seed, 10), &cfg).unwrap();
        for (k, w) in rep.phi_norm_trace.windows(2).enumerate() {
            let t = cfg.xi.powi(rep.j_history[k] as i32);
            assert!(w[1] <= (1.0 - t * cfg.epsilon) * w[0]);
        }
    }
}

#[test]
fn phi_recomputed_from_scratch() {
    let inst = instance(3, 4);
    let a0 = uee_core::model::default_allocation(&inst);
    let dual = uee_core::outer::init_dual(&inst, &a0).unwrap();
    let (phi1, phi2, inner) =
        uee_core::outer::eval_phi(&inst, &dual, &RootConfig::precise()).unwrap();
    let a = &inner.allocation;
    for (n, u) in inst.users.iter().enumerate() {
        let spend = a.p[n] + u.p_cir;
        let rs = (rate_ref(a.p[n], a.b[n], u) - u.r_e).max(0.0);
        let f = u.c * u.utility.eval(rs).unwrap();
        let want1 = dual.beta[n] * spend - f;
        let want2 = dual.nu[n] * spend - 1.0;
        assert!(
            (phi1[n] - want1).abs() <= 1e-9 * f,
            "{} vs {want1}",
            phi1[n]
        );
        assert!((phi2[n] - want2).abs() <= 1e-9, "{} vs {want2}", phi2[n]);
    }
    let b_sum: f64 = a.b.iter().sum();
    assert!((b_sum - inst.b_total).abs() <= 1e-9 * inst.b_total);
}

#[test]
fn line_search_backtracks_once() {
    // Doubling the Newton step from the starting point overshoots; the
    // first backtrack lands on the plain step, which is accepted.
    let inst = instance(0, 5);
    let cfg = NewtonConfig::default();
    let a0 = uee_core::model::default_allocation(&inst);
    let dual = uee_core::outer::init_dual(&inst, &a0).unwrap();
    let (phi1, phi2, inner) = uee_core::outer::eval_phi(&inst, &dual, &cfg.inner_cfg).unwrap();
    let phi_norm = phi1.iter().chain(&phi2).map(|v| v * v).sum::<f64>().sqrt();
    let state = uee_core::outer::NewtonState {
        dual,
        phi1,
        phi2,
        phi_norm,
        inner,
        iteration: 0,
        j_history: vec![],
    };
    let (d1, d2) = uee_core::outer::newton_direction(&inst, &state);
    let dir = (
        d1.iter().map(|v| 2.0 * v).collect(),
        d2.iter().map(|v| 2.0 * v).collect(),
    );
    let step = uee_core::outer::line_search(&inst, &state, &dir, &cfg).unwrap();
    assert_eq!(step.j, 1);
    assert!(step.phi_norm <= (1.0 - 0.5 * cfg.epsilon) * phi_norm);
}

#[test]
fn power_step_matches_golden_section() {
    let cfg = RootConfig::precise();
    let inst = instance(7, 30);
    let presets = [
        UtilitySpec::type1(0.5424, 37.2965 / 15.94e6, 1.0),
        UtilitySpec::type2(2.9351, 2.1224 / 15.94e6, 0.0),
        UtilitySpec::type3(1.0, 0.5, 0.0),
    ];
    for utility in presets {
        for (k, base) in inst.users.iter().enumerate() {
            let u = UserParams {
                utility: utility.clone(),
                ..base.clone()
            };
            let b = inst.b_total / (1.0 + k as f64);
            let got = optimize_power_given_bandwidth(&u, b, &cfg).unwrap();
            let want = best_power_golden(&u, b);
            assert!(
                (got - want).abs() <= 1e-6 * want,
                "{:?} user {k}: {got} vs {want}",
                u.utility
            );
            let best = uee_ref(got, b, &u);
            for p in log_grid(p_min_ref(b, &u), 100.0 * got, 1000) {
                assert!(uee_ref(p, b, &u) <= best * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn bandwidth_step_matches_grid() {
    let cfg = BaselineConfig::default();
    for seed in 0..5 {
        let inst = instance(seed, 2);
        let p = [2e-3, 5e-3];
        let rep = optimize_bandwidth_only(&inst, &p, &cfg).unwrap();
        let (u1, u2) = (&inst.users[0], &inst.users[1]);
        let (m1, m2) = (b_min_ref(p[0], u1), b_min_ref(p[1], u2));
        let oracle = lin_grid(m1, inst.b_total - m2, 10_000)
            .into_iter()
            .map(|b1| u1.c * uee_ref(p[0], b1, u1) + u2.c * uee_ref(p[1], inst.b_total - b1, u2))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            rep.objective >= oracle * (1.0 - 1e-9),
            "seed {seed}: {} < {oracle}",
            rep.objective
        );
        assert!(rep.objective <= oracle * (1.0 + 1e-3));
    }
}

#[test]
fn baselines_are_feasible_and_dominated() {
    let cfg = BaselineConfig::default();
    for seed in 0..8 {
        for n in [3, 12] {
            let inst = instance(seed, n);
            let best = solve(&inst, &NewtonConfig::default()).unwrap().objective;
            for rep in [
                optimize_power_only(&inst, &cfg).unwrap(),
                bandwidth_only_baseline(&inst, &cfg).unwrap(),
                alternating(&inst, &cfg).unwrap(),
            ] {
                assert!(
                    check_feasible(&rep.allocation, &inst, None)
                        .unwrap()
                        .is_feasible
                );
                assert!(
                    rep.objective <= best * (1.0 + 1e-6),
                    "{} > {best}",
                    rep.objective
                );
            }
        }
    }
}

#[test]
fn alternating_ascends() {
    let rep = alternating(&instance(2, 20), &BaselineConfig::default()).unwrap();
    for w in rep.phi_norm_trace.windows(2) {
        assert!(w[1] >= w[0] * (1.0 - 1e-12), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn single_user_alternating_is_jointly_optimal() {
    for seed in 0..5 {
        let inst = instance(seed, 1);
        let rep = alternating(&inst, &BaselineConfig::default()).unwrap();
        assert!(rep.outer_iterations <= 2);
        let oracle = grid_oracle_n1(&inst, 20_000);
        assert!(rep.objective >= oracle * (1.0 - 1e-6));
    }
}

#[test]
fn power_only_is_separable() {
    let inst = instance(4, 6);
    let cfg = BaselineConfig::default();
    let rep = optimize_power_only(&inst, &cfg).unwrap();
    let mut users = inst.users.clone();
    users.reverse();
    let rev =
        optimize_power_only(&ProblemInstance::new(users, inst.b_total).unwrap(), &cfg).unwrap();
    let mut p = rev.allocation.p.clone();
    p.reverse();
    assert_eq!(p, rep.allocation.p);
}

#[test]
fn stalled_plain_step_is_rescued() {
    // Two users with very different channels: the plain step stops reducing
    // the residual near the solution.
    let inst = instance(8, 2);
    let plain = NewtonConfig {
        jacobian_fallback: false,
        ..Default::default()
    };
    let rep = solve(&inst, &plain).unwrap();
    assert_ne!(rep.status, Status::Converged);
    assert!(rep.kkt_residual.unwrap() > 1e-4);

    let rep = solve(&inst, &NewtonConfig::default()).unwrap();
    assert_eq!(rep.status, Status::Converged);
    assert!(rep.fallback_steps > 0);
    assert!(rep.kkt_residual.unwrap() <= 1e-6);
    let oracle = grid_oracle_n2(&inst, 400, 400);
    assert!(rep.objective >= oracle * (1.0 - 1e-6));
}

#[test]
fn default_scenario_never_needs_the_fallback() {
    for seed in 0..10 {
        let rep = solve(&instance(seed, 30), &NewtonConfig::default()).unwrap();
        assert_eq!(rep.fallback_steps, 0);
    }
}
