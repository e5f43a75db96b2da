//! Brute-force references shared by the integration and acceptance tests.
//! Nothing here calls the solvers under test.
#![allow(dead_code)]

use uee_core::model::{ProblemInstance, UserParams};
use uee_core::scenario::{generate, ScenarioSpec};

pub fn instance(seed: u64, n: usize) -> ProblemInstance {
    generate(&ScenarioSpec {
        seed,
        n_users: n,
        ..Default::default()
    })
    .unwrap()
}

pub fn rate_ref(p: f64, b: f64, u: &UserParams) -> f64 {
    b * (1.0 + u.g * p / (u.sigma2 * b)).log2()
}

pub fn uee_ref(p: f64, b: f64, u: &UserParams) -> f64 {
    let rs = (rate_ref(p, b, u) - u.r_e).max(0.0);
    u.utility.eval(rs).unwrap() / (p + u.p_cir)
}

pub fn p_min_ref(b: f64, u: &UserParams) -> f64 {
    (2f64.powf(u.r_min / b) - 1.0) * u.sigma2 * b / u.g
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, z) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (z - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Golden-section maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..300 {
        if hi - lo <= 1e-14 * hi.abs() {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// UEE-maximizing power at bandwidth `b`, by golden section on a
/// doubling bracket from `p_min`.
pub fn best_power_golden(u: &UserParams, b: f64) -> f64 {
    let lo = p_min_ref(b, u);
    let f = |p: f64| uee_ref(p, b, u);
    let mut hi = lo.max(1e-9) * 2.0;
    while f(hi * 2.0) > f(hi) {
        hi *= 2.0;
    }
    golden_max(f, lo, hi * 2.0)
}

/// Best UEE over a log grid of powers from `p_min` upward.
pub fn best_uee_on_grid(u: &UserParams, b: f64, points: usize) -> f64 {
    let lo = p_min_ref(b, u);
    log_grid(lo, (lo * 1e4).max(10.0), points)
        .into_iter()
        .map(|p| uee_ref(p, b, u))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest bandwidth giving `r_min` at power `p`, by plain bisection.
pub fn b_min_ref(p: f64, u: &UserParams) -> f64 {
    let (mut lo, mut hi) = (0.0, u.r_min);
    while rate_ref(p, hi, u) < u.r_min {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if rate_ref(p, m, u) < u.r_min {
            lo = m;
        } else {
            hi = m;
        }
    }
    hi
}

/// Exhaustive grid for `N = 1`: all the bandwidth goes to the one user.
pub fn grid_oracle_n1(inst: &ProblemInstance, points: usize) -> f64 {
    let u = &inst.users[0];
    u.c * best_uee_on_grid(u, inst.b_total, points)
}

/// Exhaustive grid for `N = 2` over the split `B_1` and both powers.
/// Given the split the powers separate, so the per-user maxima over their
/// power grids give the maximum over the full product grid.
pub fn grid_oracle_n2(inst: &ProblemInstance, b_points: usize, p_points: usize) -> f64 {
    let (u1, u2) = (&inst.users[0], &inst.users[1]);
    let bt = inst.b_total;
    lin_grid(1e-4 * bt, (1.0 - 1e-4) * bt, b_points)
        .into_iter()
        .map(|b1| {
            u1.c * best_uee_on_grid(u1, b1, p_points)
                + u2.c * best_uee_on_grid(u2, bt - b1, p_points)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
