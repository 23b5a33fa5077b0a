//! Closed forms for a linear arrival rate `λ(u) = β₀ + β₁u` running since
//! −∞ and Pareto(θ, α) service.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    pub v_tau: f64,
    pub p_tau_delta: f64,
    pub m_check: f64,
}

fn check_shape(alpha: f64, theta: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 2.0) {
        return Err(Error::Unsupported(format!(
            "closed forms need alpha > 2, got {alpha}"
        )));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::invalid("theta", format!("must be > 0, got {theta}")));
    }
    Ok(())
}

/// The rate over (−∞, t] is non-negative iff `β₁ ≤ 0` and `λ(t) ≥ 0`.
fn check_past_rate(beta0: f64, beta1: f64, t: f64) -> Result<()> {
    if beta1 > 0.0 || beta0 + beta1 * t < 0.0 {
        return Err(Error::Domain(format!(
            "rate {beta0} + {beta1} u is negative somewhere on (-inf, {t}]"
        )));
    }
    Ok(())
}

/// `v_τ = (β₀+β₁τ)θ/(α−1) − β₁θ²/((α−1)(α−2))`.
pub fn v_tau(beta0: f64, beta1: f64, alpha: f64, theta: f64, tau: f64) -> Result<f64> {
    check_shape(alpha, theta)?;
    check_past_rate(beta0, beta1, tau)?;
    let a = beta0 + beta1 * tau;
    Ok(a * theta / (alpha - 1.0) - beta1 * theta * theta / ((alpha - 1.0) * (alpha - 2.0)))
}

/// `p_τ(δ) = θ^{α−1}(δ+θ)^{1−α} [1 + β₁δ / ((β₀+β₁τ)(2−α) + β₁θ)]`.
pub fn p_tau(beta0: f64, beta1: f64, alpha: f64, theta: f64, tau: f64, delta: f64) -> Result<f64> {
    check_shape(alpha, theta)?;
    check_past_rate(beta0, beta1, tau)?;
    check_delta(delta)?;
    let a = beta0 + beta1 * tau;
    let denom = a * (2.0 - alpha) + beta1 * theta;
    if denom == 0.0 {
        return Err(Error::Degenerate("nobody can be present at tau".into()));
    }
    let decay = (-(alpha - 1.0) * (delta / theta).ln_1p()).exp();
    Ok(decay * (1.0 + beta1 * delta / denom))
}

/// `m̌(τ+δ) = A/(1−α) [θ^α(δ+θ)^{1−α} − θ]
///         + β₁/((1−α)(2−α)) [θ^α(δ+θ)^{2−α} − θ² − δθ(2−α)]`, `A = β₀+β₁τ`.
pub fn m_check(beta0: f64, beta1: f64, alpha: f64, theta: f64, tau: f64, delta: f64) -> Result<f64> {
    check_shape(alpha, theta)?;
    check_delta(delta)?;
    let (lo, hi) = (beta0 + beta1 * tau, beta0 + beta1 * (tau + delta));
    if lo < 0.0 || hi < 0.0 {
        return Err(Error::Domain(format!(
            "rate {beta0} + {beta1} u is negative on [{tau}, {}]",
            tau + delta
        )));
    }
    let a = lo;
    let r = (delta / theta).ln_1p();
    // θ^α (δ+θ)^{1−α} = θ (1+δ/θ)^{1−α}, and similarly with 2−α
    let t1 = theta * (-(alpha - 1.0) * r).exp_m1();
    let t2 = theta * theta * ((-(alpha - 2.0) * r).exp_m1()) - delta * theta * (2.0 - alpha);
    Ok(a / (1.0 - alpha) * t1 + beta1 / ((1.0 - alpha) * (2.0 - alpha)) * t2)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Domain(format!("delta must be finite and >= 0, got {delta}")));
    }
    Ok(())
}

pub fn closed_forms(
    beta0: f64,
    beta1: f64,
    alpha: f64,
    theta: f64,
    tau: f64,
    delta: f64,
) -> Result<ClosedForms> {
    check_past_rate(beta0, beta1, tau + delta)?;
    Ok(ClosedForms {
        v_tau: v_tau(beta0, beta1, alpha, theta, tau)?,
        p_tau_delta: p_tau(beta0, beta1, alpha, theta, tau, delta)?,
        m_check: m_check(beta0, beta1, alpha, theta, tau, delta)?,
    })
}

/// `∂p_τ(δ)/∂β₀` and `∂m̌/∂β₀`.
pub(crate) fn d_beta0(beta0: f64, beta1: f64, alpha: f64, theta: f64, tau: f64, delta: f64) -> (f64, f64) {
    let a = beta0 + beta1 * tau;
    let denom = a * (2.0 - alpha) + beta1 * theta;
    let r = (delta / theta).ln_1p();
    let decay = (-(alpha - 1.0) * r).exp();
    let dp = decay * (-beta1 * delta * (2.0 - alpha) / (denom * denom));
    let dm = theta * (-(alpha - 1.0) * r).exp_m1() / (1.0 - alpha);
    (dp, dm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::{ArrivalRate, Domain};
    use crate::dist::ServiceDistribution;
    use crate::observed;

    #[test]
    fn constant_rate_reduction() {
        let (b0, alpha, theta) = (10.0, 3.0, 6.0);
        let d = ServiceDistribution::pareto(theta, alpha).unwrap();
        let es = theta / (alpha - 1.0);
        for delta in [0.5, 3.0, 12.0] {
            let c = closed_forms(b0, 0.0, alpha, theta, 7.0, delta).unwrap();
            assert!((c.v_tau - b0 * es).abs() < 1e-12);
            assert!((c.p_tau_delta - d.excess_ccdf(delta).unwrap()).abs() < 1e-14);
            assert!((c.m_check - b0 * es * d.excess_cdf(delta).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_delta() {
        let c = closed_forms(677.4, -3.77, 4.0, 15.66, 52.0, 0.0).unwrap();
        assert_eq!(c.p_tau_delta, 1.0);
        assert_eq!(c.m_check, 0.0);
    }

    #[test]
    fn agrees_with_general_region_masses() {
        let (b0, b1, alpha, theta, tau, delta) = (677.4, -3.77, 4.0, 15.66, 52.0, 6.0);
        let c = closed_forms(b0, b1, alpha, theta, tau, delta).unwrap();
        let rate = ArrivalRate::linear(b0, b1, Domain::new(f64::NEG_INFINITY, 150.0).unwrap()).unwrap();
        let d = ServiceDistribution::pareto(theta, alpha).unwrap();
        assert!((observed::nu_tau(&rate, &d, tau).unwrap() - c.v_tau).abs() < 1e-8);
        assert!((observed::remaining_survival(&rate, &d, tau, delta).unwrap() - c.p_tau_delta).abs() < 1e-10);
        assert!((observed::m_check(&rate, &d, tau, delta).unwrap() - c.m_check).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        assert!(matches!(closed_forms(10.0, 0.0, 2.0, 1.0, 0.0, 1.0), Err(Error::Unsupported(_))));
        assert!(matches!(closed_forms(10.0, 0.5, 3.0, 1.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(closed_forms(10.0, -1.0, 3.0, 1.0, 5.0, 6.0), Err(Error::Domain(_))));
    }

    #[test]
    fn beta0_derivatives_match_finite_differences() {
        let (b0, b1, alpha, theta, tau, delta) = (677.4, -3.77, 4.0, 15.66, 52.0, 1.0);
        let (dp, dm) = d_beta0(b0, b1, alpha, theta, tau, delta);
        let h = 1e-3;
        let fd_p = (p_tau(b0 + h, b1, alpha, theta, tau, delta).unwrap()
            - p_tau(b0 - h, b1, alpha, theta, tau, delta).unwrap())
            / (2.0 * h);
        let fd_m = (m_check(b0 + h, b1, alpha, theta, tau, delta).unwrap()
            - m_check(b0 - h, b1, alpha, theta, tau, delta).unwrap())
            / (2.0 * h);
        assert!((dp - fd_p).abs() < 1e-8 * dp.abs().max(1e-12) + 1e-14);
        assert!((dm - fd_m).abs() < 1e-8);
    }
}
