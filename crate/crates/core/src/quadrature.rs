//! Adaptive Simpson quadrature.
//!
//! Finite intervals are integrated directly. Semi-infinite intervals
//! `[a, ∞)` are mapped onto `(0, 1]` by `t = a + u^{-k} - 1`; with `k = 1`
//! this is the classic `u = 1 / (1 + t)` map. Larger `k` flattens power-law
//! tails at `u = 0`, which matters for Pareto integrands with small shape.

use crate::error::{Error, Result};

/// Tuning knobs for [`integrate`] and [`integrate_to_infinity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Exponent `k` of the tail map `t = a + u^{-k} - 1`.
    pub tail_power: i32,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_subdivisions: 1_000_000,
            tail_power: 4,
        }
    }
}

const MAX_DEPTH: u32 = 60;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[a, b]` with the default options.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    integrate_with(f, a, b, QuadOptions::default())
}

/// Integrates `f` over `[a, ∞)` with the default options.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64) -> Result<f64> {
    integrate_to_infinity_with(f, a, QuadOptions::default())
}

pub fn integrate_with<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "finite quadrature needs finite limits, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate_with(f, b, a, opts).map(|v| -v);
    }

    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let mut stack = vec![Panel {
        a,
        b,
        fa,
        fm,
        fb,
        whole: simpson(a, b, fa, fm, fb),
        tol: opts.abs_tol,
        depth: 0,
    }];
    let mut total = 0.0;
    let mut subdivisions = 0usize;

    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        let refined = left + right + delta / 15.0;

        if !refined.is_finite() {
            return Err(Error::Unsupported(format!(
                "non-finite integrand on [{}, {}]",
                p.a, p.b
            )));
        }
        let converged = delta.abs() <= 15.0 * p.tol
            || delta.abs() <= 64.0 * f64::EPSILON * (left.abs() + right.abs())
            || p.depth >= MAX_DEPTH
            || lm <= p.a
            || rm >= p.b;
        if converged {
            total += refined;
            continue;
        }
        subdivisions += 1;
        if subdivisions > opts.max_subdivisions {
            return Err(Error::Unsupported(format!(
                "quadrature exceeded {} subdivisions",
                opts.max_subdivisions
            )));
        }
        let tol = 0.5 * p.tol;
        stack.push(Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
            tol,
            depth: p.depth + 1,
        });
        stack.push(Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
            tol,
            depth: p.depth + 1,
        });
    }
    Ok(total)
}

pub fn integrate_to_infinity_with<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    opts: QuadOptions,
) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("lower limit must be finite, got {a}")));
    }
    let k = opts.tail_power.max(1);
    let kf = k as f64;
    let mapped = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let uk = u.powi(-k);
        let t = a + uk - 1.0;
        let jac = kf * uk / u;
        let v = f(t) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_with(mapped, 0.0, 1.0, opts)
}
