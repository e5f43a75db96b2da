//! Concave utility families applied to the secrecy rate.
//!
//! Three parametric families have closed-form derivative inverses:
//!
//! * `Type1`: `κ·ln(b + a·x)`
//! * `Type2`: `κ·(1 − exp(−a·x + c))`
//! * `Type3`: `κ·(x + d)^a` with `0 < a < 1`
//!
//! Anything else can be plugged in through the [`Utility`] trait.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::special::{find_root_decreasing, RootConfig};

/// A user-supplied utility. It must be increasing and concave on `x >= 0`.
pub trait Utility: Send + Sync + fmt::Debug {
    fn eval(&self, x: f64) -> f64;

    fn deriv(&self, x: f64) -> f64;

    /// Inverse of the derivative. `None` when no `x >= 0` has `f'(x) == y`.
    ///
    /// The default bisects on the (non-increasing) derivative.
    fn deriv_inverse(&self, y: f64) -> Option<f64> {
        if self.deriv(0.0) <= y {
            return None;
        }
        find_root_decreasing(|x| self.deriv(x), y, &RootConfig::precise()).ok()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum UtilitySpec {
    Type1 {
        kappa: f64,
        a: f64,
        b: f64,
    },
    Type2 {
        kappa: f64,
        a: f64,
        c: f64,
    },
    Type3 {
        kappa: f64,
        a: f64,
        d: f64,
    },
    #[serde(skip)]
    Custom(Arc<dyn Utility>),
}

impl PartialEq for UtilitySpec {
    fn eq(&self, other: &Self) -> bool {
        use UtilitySpec::*;
        match (self, other) {
            (
                Type1 { kappa, a, b },
                Type1 {
                    kappa: k,
                    a: a2,
                    b: b2,
                },
            ) => kappa == k && a == a2 && b == b2,
            (
                Type2 { kappa, a, c },
                Type2 {
                    kappa: k,
                    a: a2,
                    c: c2,
                },
            ) => kappa == k && a == a2 && c == c2,
            (
                Type3 { kappa, a, d },
                Type3 {
                    kappa: k,
                    a: a2,
                    d: d2,
                },
            ) => kappa == k && a == a2 && d == d2,
            (Custom(x), Custom(y)) => Arc::ptr_eq(x, y),
            _ => false,
        }
    }
}

impl UtilitySpec {
    pub fn type1(kappa: f64, a: f64, b: f64) -> Self {
        UtilitySpec::Type1 { kappa, a, b }
    }

    pub fn type2(kappa: f64, a: f64, c: f64) -> Self {
        UtilitySpec::Type2 { kappa, a, c }
    }

    pub fn type3(kappa: f64, a: f64, d: f64) -> Self {
        UtilitySpec::Type3 { kappa, a, d }
    }

    pub fn custom(u: impl Utility + 'static) -> Self {
        UtilitySpec::Custom(Arc::new(u))
    }

    /// Parameter-range check only; see [`validate_spec`] for the numeric one.
    pub fn check_params(&self) -> Result<()> {
        let ok = match *self {
            UtilitySpec::Type1 { kappa, a, b } => kappa > 0.0 && a > 0.0 && b >= 0.0,
            UtilitySpec::Type2 { kappa, a, c } => kappa > 0.0 && a > 0.0 && c.is_finite(),
            UtilitySpec::Type3 { kappa, a, d } => kappa > 0.0 && a > 0.0 && a < 1.0 && d >= 0.0,
            UtilitySpec::Custom(_) => true,
        };
        let finite = match *self {
            UtilitySpec::Type1 { kappa, a, b } => [kappa, a, b].iter().all(|v| v.is_finite()),
            UtilitySpec::Type2 { kappa, a, c } => [kappa, a, c].iter().all(|v| v.is_finite()),
            UtilitySpec::Type3 { kappa, a, d } => [kappa, a, d].iter().all(|v| v.is_finite()),
            UtilitySpec::Custom(_) => true,
        };
        if ok && finite {
            Ok(())
        } else {
            domain(format!("utility parameters out of range: {self:?}"))
        }
    }

    /// `f(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || x.is_infinite() {
            return domain(format!("utility argument {x} must be finite and >= 0"));
        }
        if let UtilitySpec::Type1 { b, .. } = *self {
            if b == 0.0 && x == 0.0 {
                return domain("Type1 utility with b = 0 is undefined at 0");
            }
        }
        Ok(self.eval_unchecked(x))
    }

    /// `f'(x)`. Type3 with `d = 0` has no derivative at 0.
    pub fn deriv(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || x.is_infinite() {
            return domain(format!("utility argument {x} must be finite and >= 0"));
        }
        match *self {
            UtilitySpec::Type3 { d, .. } if d == 0.0 && x == 0.0 => {
                domain("Type3 utility with d = 0 has no derivative at 0")
            }
            UtilitySpec::Type1 { b, .. } if b == 0.0 && x == 0.0 => {
                domain("Type1 utility with b = 0 has no derivative at 0")
            }
            _ => Ok(self.deriv_unchecked(x)),
        }
    }

    /// Solves `f'(x) = y` for `x >= 0`; `Ok(None)` when the solution would be
    /// negative.
    pub fn deriv_inverse(&self, y: f64) -> Result<Option<f64>> {
        if !(y > 0.0) || y.is_infinite() {
            return domain(format!("derivative value {y} must be positive and finite"));
        }
        Ok(self.deriv_inverse_unchecked(y))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        match self {
            UtilitySpec::Type1 { kappa, a, b } if *b > 0.0 => {
                kappa * (b.ln() + (a * x / b).ln_1p())
            }
            UtilitySpec::Type1 { kappa, a, b } => kappa * (b + a * x).ln(),
            UtilitySpec::Type2 { kappa, a, c } => -kappa * (-a * x + c).exp_m1(),
            UtilitySpec::Type3 { kappa, a, d } => kappa * (x + d).powf(*a),
            UtilitySpec::Custom(u) => u.eval(x),
        }
    }

    /// Returns `+inf` where the derivative blows up.
    pub(crate) fn deriv_unchecked(&self, x: f64) -> f64 {
        match self {
            UtilitySpec::Type1 { kappa, a, b } => kappa * a / (b + a * x),
            UtilitySpec::Type2 { kappa, a, c } => kappa * a * (-a * x + c).exp(),
            UtilitySpec::Type3 { kappa, a, d } => {
                if x + d == 0.0 {
                    f64::INFINITY
                } else {
                    kappa * a * (x + d).powf(a - 1.0)
                }
            }
            UtilitySpec::Custom(u) => u.deriv(x),
        }
    }

    pub(crate) fn deriv_inverse_unchecked(&self, y: f64) -> Option<f64> {
        let x = match self {
            UtilitySpec::Type1 { kappa, a, b } => kappa / y - b / a,
            UtilitySpec::Type2 { kappa, a, c } => (c - (y / (kappa * a)).ln()) / a,
            UtilitySpec::Type3 { kappa, a, d } => (y / (kappa * a)).powf(1.0 / (a - 1.0)) - d,
            UtilitySpec::Custom(u) => return u.deriv_inverse(y),
        };
        (x >= 0.0).then_some(x)
    }
}

/// One failed property found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationFailure {
    pub property: &'static str,
    pub x: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, property: &'static str, x: f64, detail: String) {
        self.failures.push(ValidationFailure {
            property,
            x,
            detail,
        });
    }
}

const GRID_POINTS: usize = 241;

/// Numerically checks that `s` is increasing and concave on a log grid over
/// `[1e-3, 1e9]`, that `deriv` agrees with centered differences (relative
/// error ≤ 1e-6) and that `deriv_inverse` round-trips (relative error ≤
/// 1e-10).
///
/// Finite-difference points where rounding noise alone would exceed the
/// tolerance (a flat tail of `Type2`, say) are skipped.
pub fn validate_spec(s: &UtilitySpec) -> ValidationReport {
    let mut rep = ValidationReport::default();
    if let Err(e) = s.check_params() {
        rep.fail("parameter range", f64::NAN, e.to_string());
        return rep;
    }

    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| 10f64.powf(-3.0 + 12.0 * k as f64 / (GRID_POINTS - 1) as f64))
        .collect();
    let mut prev: Option<(f64, f64)> = None;
    for &x in &grid {
        let f = s.eval_unchecked(x);
        let df = s.deriv_unchecked(x);
        if !f.is_finite() || !df.is_finite() {
            rep.fail("finite", x, format!("f={f}, f'={df}"));
            continue;
        }
        if df < 0.0 || (df == 0.0 && prev.is_none()) {
            rep.fail("increasing", x, format!("f'={df}"));
        }
        if let Some((pf, pdf)) = prev {
            if f < pf {
                rep.fail("increasing", x, format!("f dropped from {pf} to {f}"));
            }
            if df > pdf * (1.0 + 1e-12) {
                rep.fail("concave", x, format!("f' rose from {pdf} to {df}"));
            }
        }
        prev = Some((f, df));

        let h = 1e-4 * x;
        let noise = f64::EPSILON * f.abs().max(1e-300) / (h * df);
        if df > 0.0 && noise < 1e-8 {
            let fd = (s.eval_unchecked(x + h) - s.eval_unchecked(x - h)) / (2.0 * h);
            let rel = (fd - df).abs() / df;
            if rel > 1e-6 {
                rep.fail(
                    "derivative",
                    x,
                    format!("f'={df}, centered difference {fd}"),
                );
            }
        }

        if df > 0.0 {
            match s.deriv_inverse_unchecked(df) {
                Some(xi) => {
                    let back = s.deriv_unchecked(xi);
                    let rel = (back - df).abs() / df;
                    if rel > 1e-10 {
                        rep.fail("inverse", x, format!("f'(inv({df})) = {back}"));
                    }
                }
                None => rep.fail("inverse", x, format!("no solution for y={df}")),
            }
        }
    }
    rep
}
