//! Priors, the occupancy likelihood and model-generated series.
//!
//! Month `t`'s count is `Po(M)` with `M = n_prev p_τ(δ) + m̌(τ + δ)`, where
//! `τ` is the previous observed month, `n_prev` its count and `δ` the gap.
//! The first observation only sets the initial condition.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::closed::{self, closed_forms};
use super::series::{CountSeries, Provenance, YearMonth};
use crate::error::{Error, Result};
use crate::stats::poisson_ln_pmf;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPrior {
    pub lo: f64,
    pub hi: f64,
}

/// Priors for `(β₀, β₁, α)`; `θ = E[S](α − 1)` with `E[S] = mean_service`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub beta0: NormalPrior,
    pub beta1: NormalPrior,
    #[serde(default = "default_alpha")]
    pub alpha: UniformPrior,
    pub mean_service: f64,
    /// Permit `alpha.lo < 2.5`.
    #[serde(default)]
    pub allow_low_alpha: bool,
}

fn default_alpha() -> UniformPrior {
    UniformPrior { lo: 2.5, hi: 10.0 }
}

impl PriorSpec {
    pub fn new(beta0: NormalPrior, beta1: NormalPrior, mean_service: f64) -> Result<Self> {
        let p = Self {
            beta0,
            beta1,
            alpha: default_alpha(),
            mean_service,
            allow_low_alpha: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Normal priors centred on arrival-posterior means with standard
    /// deviations `scale` times the posterior ones.
    pub fn from_arrival_summary(
        beta0_mean: f64,
        beta0_sd: f64,
        beta1_mean: f64,
        beta1_sd: f64,
        scale: f64,
        mean_service: f64,
    ) -> Result<Self> {
        Self::new(
            NormalPrior { mu: beta0_mean, sigma: scale * beta0_sd },
            NormalPrior { mu: beta1_mean, sigma: scale * beta1_sd },
            mean_service,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0.sigma > 0.0 && self.beta1.sigma > 0.0) {
            return Err(Error::invalid("sigma", "prior standard deviations must be > 0"));
        }
        if !(self.alpha.hi > self.alpha.lo) {
            return Err(Error::invalid("alpha", "upper bound must exceed lower bound"));
        }
        if self.alpha.lo <= 2.0 {
            return Err(Error::Unsupported(format!(
                "alpha lower bound must exceed 2, got {}",
                self.alpha.lo
            )));
        }
        if self.alpha.lo < 2.5 && !self.allow_low_alpha {
            return Err(Error::invalid(
                "alpha",
                format!("lower bound {} < 2.5 needs allow_low_alpha", self.alpha.lo),
            ));
        }
        if !(self.mean_service.is_finite() && self.mean_service > 0.0) {
            return Err(Error::invalid("mean_service", "must be > 0"));
        }
        Ok(())
    }

    /// Advisory messages about the chosen bounds.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.alpha.hi > 10.0 {
            w.push(format!(
                "alpha upper bound {} exceeds 10; large alpha is weakly identified from counts",
                self.alpha.hi
            ));
        }
        if self.alpha.lo < 2.5 {
            w.push(format!(
                "alpha lower bound {} admits service laws close to infinite variance",
                self.alpha.lo
            ));
        }
        w
    }

    pub fn theta(&self, alpha: f64) -> f64 {
        self.mean_service * (alpha - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub beta0: f64,
    pub beta1: f64,
    pub alpha: f64,
}

impl Params {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.beta0, self.beta1, self.alpha]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            beta0: x[0],
            beta1: x[1],
            alpha: x[2],
        }
    }
}

/// `M(τ + δ) = n p_τ(δ) + m̌(τ + δ)`.
pub fn predictive_mean(p: &Params, theta: f64, tau: f64, delta: f64, n: u64) -> Result<f64> {
    let c = closed_forms(p.beta0, p.beta1, p.alpha, theta, tau, delta)?;
    Ok(n as f64 * c.p_tau_delta + c.m_check)
}

/// Log prior; −∞ outside the support.
pub fn log_prior(p: &Params, priors: &PriorSpec) -> f64 {
    if !(p.alpha >= priors.alpha.lo && p.alpha <= priors.alpha.hi) {
        return f64::NEG_INFINITY;
    }
    priors.beta0.ln_pdf(p.beta0) + priors.beta1.ln_pdf(p.beta1)
        - (priors.alpha.hi - priors.alpha.lo).ln()
}

pub fn log_likelihood(p: &Params, series: &CountSeries, mean_service: f64) -> f64 {
    let theta = mean_service * (p.alpha - 1.0);
    let mut total = 0.0;
    for w in series.points.windows(2) {
        let (tau, n_prev) = w[0];
        let (t, n) = w[1];
        let m = match predictive_mean(p, theta, tau as f64, (t - tau) as f64, n_prev) {
            Ok(m) if m > 0.0 => m,
            Ok(_) if n == 0 => continue,
            _ => return f64::NEG_INFINITY,
        };
        total += poisson_ln_pmf(n, m);
    }
    total
}

pub fn log_posterior(p: &Params, series: &CountSeries, priors: &PriorSpec) -> f64 {
    let lp = log_prior(p, priors);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + log_likelihood(p, series, priors.mean_service)
}

/// `∂ log_posterior / ∂β₀`.
pub fn d_log_posterior_d_beta0(p: &Params, series: &CountSeries, priors: &PriorSpec) -> Result<f64> {
    let theta = priors.theta(p.alpha);
    let mut g = -(p.beta0 - priors.beta0.mu) / (priors.beta0.sigma * priors.beta0.sigma);
    for w in series.points.windows(2) {
        let (tau, n_prev) = w[0];
        let (t, n) = w[1];
        let (tau, delta) = (tau as f64, (t - tau) as f64);
        let m = predictive_mean(p, theta, tau, delta, n_prev)?;
        let (dp, dm) = closed::d_beta0(p.beta0, p.beta1, p.alpha, theta, tau, delta);
        g += (n as f64 / m - 1.0) * (n_prev as f64 * dp + dm);
    }
    Ok(g)
}

/// A series drawn from the model: `n₀ ~ Po(v₀)` and each later month from
/// `Po(M)` given the previous count.
pub fn simulate_counts(
    p: &Params,
    mean_service: f64,
    months: usize,
    origin: YearMonth,
    seed: u64,
) -> Result<CountSeries> {
    let theta = mean_service * (p.alpha - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |mean: f64| -> Result<u64> {
        if mean <= 0.0 {
            return Ok(0);
        }
        Ok(Poisson::new(mean)
            .map_err(|e| Error::invalid("mean", e.to_string()))?
            .sample(&mut rng) as u64)
    };
    let mut points = Vec::with_capacity(months);
    let mut n = draw(closed::v_tau(p.beta0, p.beta1, p.alpha, theta, 0.0)?)?;
    points.push((0, n));
    for t in 1..months as i64 {
        n = draw(predictive_mean(p, theta, (t - 1) as f64, 1.0, n)?)?;
        points.push((t, n));
    }
    CountSeries::new("synthetic", origin, points, Provenance::Synthesized)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Params, PriorSpec, CountSeries) {
        let truth = Params { beta0: 677.4, beta1: -3.77, alpha: 4.0 };
        let priors = PriorSpec::from_arrival_summary(1376.5, 9.7, -11.5, 0.3, 10.0, 5.22).unwrap();
        let series = simulate_counts(&truth, 5.22, 24, YearMonth::new(2015, 3).unwrap(), 3).unwrap();
        (truth, priors, series)
    }

    #[test]
    fn ten_fold_prior_rule() {
        let (_, priors, _) = fixture();
        assert!((priors.beta0.sigma - 97.0).abs() < 1e-12);
        assert!((priors.beta1.sigma - 3.0).abs() < 1e-12);
        assert_eq!(priors.alpha, UniformPrior { lo: 2.5, hi: 10.0 });
        assert!((priors.theta(4.0) - 15.66).abs() < 1e-12);
    }

    #[test]
    fn alpha_outside_support_is_impossible() {
        let (truth, priors, series) = fixture();
        for alpha in [2.4, 10.1] {
            let p = Params { alpha, ..truth };
            assert_eq!(log_posterior(&p, &series, &priors), f64::NEG_INFINITY);
        }
        assert!(log_posterior(&truth, &series, &priors).is_finite());
    }

    #[test]
    fn positive_slope_is_outside_support() {
        let (truth, priors, series) = fixture();
        let p = Params { beta1: 0.1, ..truth };
        assert_eq!(log_posterior(&p, &series, &priors), f64::NEG_INFINITY);
    }

    #[test]
    fn single_term_is_maximized_at_rounded_mean() {
        let truth = Params { beta0: 677.4, beta1: -3.77, alpha: 4.0 };
        let theta = 5.22 * 3.0;
        let m = predictive_mean(&truth, theta, 0.0, 1.0, 3500).unwrap();
        let best = (m.floor() as u64..=m.ceil() as u64)
            .max_by(|a, b| poisson_ln_pmf(*a, m).total_cmp(&poisson_ln_pmf(*b, m)))
            .unwrap();
        let origin = YearMonth::new(2015, 3).unwrap();
        let ll = |n: u64| {
            let s = CountSeries::from_counts("x", origin, &[3500, n]);
            log_likelihood(&truth, &s, 5.22)
        };
        for n in (best - 40)..(best + 40) {
            assert!(ll(n) <= ll(best));
        }
        assert_eq!(best, m.round() as u64);
    }

    #[test]
    fn analytic_beta0_partial_matches_finite_difference() {
        let (truth, priors, series) = fixture();
        let g = d_log_posterior_d_beta0(&truth, &series, &priors).unwrap();
        let h = 1e-4;
        let up = log_posterior(&Params { beta0: truth.beta0 + h, ..truth }, &series, &priors);
        let dn = log_posterior(&Params { beta0: truth.beta0 - h, ..truth }, &series, &priors);
        let fd = (up - dn) / (2.0 * h);
        assert!((g - fd).abs() <= 1e-4 * g.abs().max(1.0), "{g} {fd}");
    }

    #[test]
    fn simulated_series_is_reproducible() {
        let truth = Params { beta0: 1000.0, beta1: -5.0, alpha: 4.0 };
        let o = YearMonth::new(2015, 3).unwrap();
        let a = simulate_counts(&truth, 5.22, 30, o, 1).unwrap();
        assert_eq!(a, simulate_counts(&truth, 5.22, 30, o, 1).unwrap());
        assert_ne!(a, simulate_counts(&truth, 5.22, 30, o, 2).unwrap());
        let v0 = closed::v_tau(1000.0, -5.0, 4.0, 15.66, 0.0).unwrap();
        assert!((a.points[0].1 as f64 - v0).abs() < 5.0 * v0.sqrt());
    }

    #[test]
    fn prior_validation() {
        let n = NormalPrior { mu: 0.0, sigma: 1.0 };
        let mut p = PriorSpec::new(n, n, 3.0).unwrap();
        p.alpha.hi = 20.0;
        assert_eq!(p.warnings().len(), 1);
        p.alpha.lo = 2.2;
        assert!(p.validate().is_err());
        p.allow_low_alpha = true;
        assert!(p.validate().is_ok());
        p.alpha.lo = 2.0;
        assert!(matches!(p.validate(), Err(Error::Unsupported(_))));
        assert!(PriorSpec::new(NormalPrior { mu: 0.0, sigma: 0.0 }, n, 3.0).is_err());
    }
}
