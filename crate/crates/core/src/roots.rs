//! Bracketing root finders.

use crate::error::{Error, Result};

/// Bisection on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (or one of them be zero).
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::Infeasible(format!(
            "root not bracketed on [{lo}, {hi}]"
        )));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finds a root of a function that changes sign somewhere in `[lo, ∞)`.
///
/// The upper end starts at `lo + initial_width` and is doubled until the
/// sign differs from `f(lo)`.
pub fn bisect_expanding<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    initial_width: f64,
    tol: f64,
) -> Result<f64> {
    let flo = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let mut width = initial_width.max(f64::MIN_POSITIVE);
    for _ in 0..1100 {
        let hi = lo + width;
        let fhi = f(hi);
        if fhi == 0.0 {
            return Ok(hi);
        }
        if fhi.signum() != flo.signum() && !fhi.is_nan() {
            return bisect(f, lo, hi, tol);
        }
        if !hi.is_finite() {
            break;
        }
        width *= 2.0;
    }
    Err(Error::Infeasible(format!(
        "no sign change found above {lo}"
    )))
}
