//! Natural cubic smoothing spline with the smoothing parameter chosen by
//! generalized cross-validation.
//!
//! Uses the value/second-derivative form: for knots `x`, fitted values
//! `g = (I + λ Q R⁻¹ Qᵀ)⁻¹ y` and interior second derivatives
//! `γ = R⁻¹ Qᵀ g`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    x: Vec<f64>,
    g: Vec<f64>,
    /// Second derivatives at every knot; zero at both ends.
    gamma: Vec<f64>,
    pub lambda: f64,
    pub gcv: f64,
    pub effective_df: f64,
}

struct Penalty {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn penalty(x: &[f64]) -> Result<Penalty> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    if h.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("x", "knots must increase strictly"));
    }
    let m = n - 2;
    let mut q = DMatrix::zeros(n, m);
    let mut r = DMatrix::zeros(m, m);
    for j in 0..m {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < m {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    Ok(Penalty { q, r })
}

/// `A(λ) = I − λQ(R + λQᵀQ)⁻¹Qᵀ`, which stays well conditioned for large `λ`.
fn smoother(p: &Penalty, lambda: f64) -> Result<DMatrix<f64>> {
    let n = p.q.nrows();
    let qt = p.q.transpose();
    let m = &p.r + &qt * &p.q * lambda;
    let inner = m
        .cholesky()
        .ok_or_else(|| Error::NonConvergence(format!("singular smoother at lambda = {lambda}")))?
        .solve(&qt);
    Ok(DMatrix::identity(n, n) - &p.q * inner * lambda)
}

fn gcv_score(p: &Penalty, y: &DVector<f64>, lambda: f64) -> Result<(f64, f64)> {
    let a = smoother(p, lambda)?;
    let n = y.len() as f64;
    let fit = &a * y;
    let rss = (y - fit).norm_squared();
    let tr = a.trace();
    let denom = n - tr;
    if denom <= 1e-9 {
        return Ok((f64::INFINITY, tr));
    }
    Ok((n * rss / (denom * denom), tr))
}

impl SmoothingSpline {
    /// Fits with `λ` minimizing the GCV score.
    pub fn fit_gcv(x: &[f64], y: &[f64]) -> Result<Self> {
        check_input(x, y)?;
        let p = penalty(x)?;
        let yv = DVector::from_column_slice(y);
        let mean_h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        let scale = mean_h.powi(3);
        let score = |log_l: f64| gcv_score(&p, &yv, scale * 10f64.powf(log_l)).map(|s| s.0);

        let mut best = (f64::INFINITY, 0.0);
        let mut l = -6.0;
        while l <= 8.0 + 1e-12 {
            let s = score(l)?;
            if s < best.0 {
                best = (s, l);
            }
            l += 0.25;
        }
        // golden-section refinement around the best grid point
        let (mut a, mut b) = (best.1 - 0.25, best.1 + 0.25);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (score(c)?, score(d)?);
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = score(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = score(d)?;
            }
        }
        let log_l = if fc.min(fd) < best.0 { 0.5 * (a + b) } else { best.1 };
        Self::fit_with(x, y, scale * 10f64.powf(log_l))
    }

    pub fn fit_with(x: &[f64], y: &[f64], lambda: f64) -> Result<Self> {
        check_input(x, y)?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid("lambda", "must be finite and >= 0"));
        }
        let p = penalty(x)?;
        let yv = DVector::from_column_slice(y);
        let a = smoother(&p, lambda)?;
        let g = &a * &yv;
        let (gcv, effective_df) = gcv_score(&p, &yv, lambda)?;
        let inner = p
            .r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NonConvergence("spline band matrix is not positive definite".into()))?
            .solve(&(p.q.transpose() * &g));
        let mut gamma = vec![0.0; x.len()];
        gamma[1..x.len() - 1].copy_from_slice(inner.as_slice());
        Ok(Self {
            x: x.to_vec(),
            g: g.as_slice().to_vec(),
            gamma,
            lambda,
            gcv,
            effective_df,
        })
    }

    pub fn fitted(&self) -> &[f64] {
        &self.g
    }

    /// Evaluates the spline; linear beyond the end knots.
    pub fn eval(&self, t: f64) -> f64 {
        let (x, g, gm) = (&self.x, &self.g, &self.gamma);
        let n = x.len();
        if t <= x[0] {
            let h = x[1] - x[0];
            let slope = (g[1] - g[0]) / h - h * gm[1] / 6.0;
            return g[0] + slope * (t - x[0]);
        }
        if t >= x[n - 1] {
            let h = x[n - 1] - x[n - 2];
            let slope = (g[n - 1] - g[n - 2]) / h + h * gm[n - 2] / 6.0;
            return g[n - 1] + slope * (t - x[n - 1]);
        }
        let i = x.partition_point(|&k| k <= t).saturating_sub(1).min(n - 2);
        let h = x[i + 1] - x[i];
        let (a, b) = (t - x[i], x[i + 1] - t);
        (a * g[i + 1] + b * g[i]) / h
            - a * b / 6.0 * ((1.0 + a / h) * gm[i + 1] + (1.0 + b / h) * gm[i])
    }
}

fn check_input(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("y", "length must match x"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("x", "a smoothing spline needs at least 3 knots"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("x", "values must be finite"));
    }
    Ok(())
}
