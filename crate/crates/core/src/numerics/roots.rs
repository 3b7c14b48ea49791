//! Bracketing and bisection for monotone scalar functions.

use crate::error::{Error, Result};

/// Maximum number of outer-endpoint doublings during bracket expansion.
pub const MAX_EXPANSIONS: usize = 200;

/// Smallest magnitude used as the inner bracket endpoint next to a singular point.
pub const INNER_EPS: f64 = 1e-300;

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs.
///
/// Runs until the bracket is narrower than `abs_tol` or the midpoint can no
/// longer be distinguished from an endpoint. Passing `abs_tol = 0.0` resolves
/// the root to the last representable bit.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, abs_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NumericFault(format!(
            "bisection bracket [{lo}, {hi}] has no sign change"
        )));
    }
    let lo_negative = f_lo < 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= abs_tol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm.is_nan() {
            return Err(Error::NumericFault(format!("NaN during bisection at {mid}")));
        }
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Doubles `hi` (starting from `start > 0`) until `f(hi)` is strictly positive.
pub fn expand_upward<F>(mut f: F, start: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut hi = start;
    for _ in 0..MAX_EXPANSIONS {
        if f(hi) > 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(Error::BracketFailure {
        expansions: MAX_EXPANSIONS,
    })
}
