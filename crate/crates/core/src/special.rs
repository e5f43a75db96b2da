//! Numerical primitives: the principal Lambert W branch, a one-sided root
//! finder for non-increasing functions and a golden-section maximizer.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, UeeError};

const INV_E: f64 = 0.367_879_441_171_442_33;
// Low-order part of 1/e so that z + 1/e keeps precision near the branch point.
const INV_E_LO: f64 = -1.242_875_367_278_836_3e-17;

/// Tolerances for [`find_root_decreasing`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// First upper bound tried before doubling.
    pub initial_guess: f64,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            max_iter: 200,
            initial_guess: 1.0,
        }
    }
}

impl RootConfig {
    /// Bisect until the bracket collapses to adjacent floats.
    pub fn precise() -> Self {
        RootConfig {
            abs_tol: f64::MIN_POSITIVE,
            rel_tol: 1e-15,
            ..Default::default()
        }
    }

    pub fn with_guess(mut self, guess: f64) -> Self {
        self.initial_guess = guess;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return domain("root tolerances must be positive");
        }
        if self.max_iter == 0 {
            return domain("max_iter must be at least 1");
        }
        if !(self.initial_guess > 0.0 && self.initial_guess.is_finite()) {
            return domain("initial_guess must be positive and finite");
        }
        Ok(())
    }
}

/// Principal branch of the Lambert W function.
///
/// Returns `w >= -1` with `w * exp(w) == z`. Arguments a few ulps below
/// `-1/e` are treated as the branch point.
pub fn lambert_w0(z: f64) -> Result<f64> {
    if z.is_nan() {
        return domain("lambert_w0 of NaN");
    }
    if z == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let zp = (z + INV_E) + INV_E_LO;
    if zp < 0.0 {
        if zp >= -4.0 * f64::EPSILON {
            return Ok(-1.0);
        }
        return domain(format!("lambert_w0 argument {z} below -1/e"));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if zp == 0.0 {
        return Ok(-1.0);
    }

    if z > 1e100 {
        return Ok(w0_from_ln(z.ln()));
    }
    let mut w = initial_guess(z, zp);

    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - z;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).max(-1.0);
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs());
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

/// `W0(e^l)` for any real `l`, without forming `e^l` when it would
/// overflow.
pub fn lambert_w0_exp(l: f64) -> Result<f64> {
    if l.is_nan() {
        return domain("lambert_w0_exp of NaN");
    }
    if l <= 230.0 {
        return lambert_w0(l.exp());
    }
    Ok(w0_from_ln(l))
}

/// Halley on `w + ln w − l`, for `l` large enough that `w > 1`.
fn w0_from_ln(l: f64) -> f64 {
    if l == f64::INFINITY {
        return f64::INFINITY;
    }
    let ll = l.ln();
    let mut w = l - ll + ll / l;
    for _ in 0..50 {
        let g = w + w.ln() - l;
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let step = g / (g1 - 0.5 * g * g2 / g1);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    w
}

fn initial_guess(z: f64, zp: f64) -> f64 {
    if zp < 0.25 {
        let p = (2.0 * std::f64::consts::E * zp).sqrt();
        -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
    } else if z < 3.0 {
        // Pade-style guess that is accurate on the moderate range.
        let l = (1.0 + z).ln();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// Finds `x > 0` with `f(x) <= target` and `|f(x) - target| <= abs_tol +
/// rel_tol * |target|` for a non-increasing `f`.
///
/// The lower end of the bracket starts at 0 (never evaluated); the upper
/// end is `cfg.initial_guess`, doubled until `f` drops to the target.
/// Bisection also stops when the bracket collapses to adjacent floats,
/// in which case the returned point is the smallest one found on the
/// lower side of the target.
pub fn find_root_decreasing<F>(mut f: F, target: f64, cfg: &RootConfig) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    cfg.validate()?;
    let tol = cfg.abs_tol + cfg.rel_tol * target.abs();
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x);
        // +inf is an admissible value for functions that blow up at 0+.
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(UeeError::NonFinite { value: v, at: x });
        }
        Ok(v)
    };

    let mut lo = 0.0;
    let mut hi = cfg.initial_guess;
    let mut f_hi = eval(hi)?;
    let mut doublings = 0;
    while f_hi > target {
        if doublings >= cfg.max_iter || !hi.is_finite() {
            return Err(UeeError::Bracket {
                iterations: doublings,
                last: hi,
            });
        }
        lo = hi;
        hi *= 2.0;
        f_hi = eval(hi)?;
        doublings += 1;
    }

    for _ in 0..cfg.max_iter {
        if target - f_hi <= tol {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(hi);
        }
        let f_mid = eval(mid)?;
        if f_mid > target {
            lo = mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if target - f_hi <= tol {
        Ok(hi)
    } else {
        Err(UeeError::NotConverged {
            iterations: cfg.max_iter,
        })
    }
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
///
/// Returns `(x, f(x))`, stopping once the bracket is narrower than
/// `rel_tol * (|x| + tiny)`.
pub fn golden_section_max<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..500 {
        if hi - lo <= rel_tol * (0.5 * (lo + hi)).abs() + 1e-300 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes a quasiconcave `f` on `[lo, inf)`: the upper end is doubled
/// from `lo` until `f` starts decreasing, then golden-section search runs.
pub fn maximize_from<F>(mut f: F, lo: f64, rel_tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo > 0.0 && lo.is_finite()) {
        return domain("maximize_from needs a positive finite start");
    }
    let mut a = lo;
    let mut b = lo * 2.0;
    let mut fb = f(b);
    let f_lo = f(lo);
    if f_lo >= fb {
        return Ok(golden_section_max(f, lo, b, rel_tol));
    }
    for _ in 0..1100 {
        let c = b * 2.0;
        let fc = f(c);
        if !c.is_finite() {
            break;
        }
        if fc <= fb {
            return Ok(golden_section_max(f, a, c, rel_tol));
        }
        a = b;
        b = c;
        fb = fc;
    }
    Err(UeeError::Bracket {
        iterations: 1100,
        last: b,
    })
}
