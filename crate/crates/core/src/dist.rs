//! Service-time distributions and the transforms the queue analysis needs:
//! survival functions, moments, the stationary-excess law and elapsed-time
//! conditioning.
//!
//! All times are in months. Pareto is the law used throughout the
//! application path; the exponential and deterministic kinds exist because
//! they have simple closed answers (memorylessness, uniform excess) that make
//! good test oracles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A service-time law `G`.
///
/// Serialized as a tagged object, e.g.
/// `{"kind": "pareto", "theta": 10.44, "alpha": 3.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawDistribution")]
pub enum ServiceDistribution {
    /// Shifted (Lomax) Pareto with `G^c(x) = θ^α (x + θ)^{-α}`.
    Pareto { theta: f64, alpha: f64 },
    Exponential { rate: f64 },
    Deterministic { d: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawDistribution {
    Pareto { theta: f64, alpha: f64 },
    Exponential { rate: f64 },
    Deterministic { d: f64 },
}

impl TryFrom<RawDistribution> for ServiceDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw {
            RawDistribution::Pareto { theta, alpha } => Self::pareto(theta, alpha),
            RawDistribution::Exponential { rate } => Self::exponential(rate),
            RawDistribution::Deterministic { d } => Self::deterministic(d),
        }
    }
}

/// A moment that may be finite, infinite or undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Finite(f64),
    Infinite,
    Undefined,
}

impl Moment {
    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Moment,
    pub variance: Moment,
    pub scv: Moment,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_time(name: &str, x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        Err(Error::Domain(format!("{name} must be >= 0, got {x}")))
    } else {
        Ok(())
    }
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("probability must be in [0, 1), got {p}")))
    }
}

impl ServiceDistribution {
    pub fn pareto(theta: f64, alpha: f64) -> Result<Self> {
        positive("theta", theta)?;
        positive("alpha", alpha)?;
        Ok(Self::Pareto { theta, alpha })
    }

    /// Pareto with a given mean, i.e. `θ = mean · (α − 1)`.
    pub fn pareto_with_mean(mean: f64, alpha: f64) -> Result<Self> {
        positive("mean", mean)?;
        if !(alpha > 1.0) {
            return Err(Error::invalid("alpha", "a finite mean needs alpha > 1"));
        }
        Self::pareto(mean * (alpha - 1.0), alpha)
    }

    /// Pareto with a given mean and squared coefficient of variation
    /// (`scv > 1`), using `α = 2·scv / (scv − 1)`.
    pub fn pareto_with_mean_scv(mean: f64, scv: f64) -> Result<Self> {
        if !(scv > 1.0) {
            return Err(Error::invalid("scv", "Pareto laws have scv > 1"));
        }
        Self::pareto_with_mean(mean, 2.0 * scv / (scv - 1.0))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn deterministic(d: f64) -> Result<Self> {
        positive("d", d)?;
        Ok(Self::Deterministic { d })
    }

    /// `G^c(x)` extended by 1 for negative arguments.
    pub(crate) fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if x < 0.0 { 1.0 } else { self.survival_nonneg(0.0) };
        }
        self.survival_nonneg(x)
    }

    fn survival_nonneg(&self, x: f64) -> f64 {
        match *self {
            Self::Pareto { theta, alpha } => (-alpha * (x / theta).ln_1p()).exp(),
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::Deterministic { d } => {
                if x < d {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(S > x)`.
    pub fn ccdf(&self, x: f64) -> Result<f64> {
        check_time("x", x)?;
        Ok(self.survival_nonneg(x))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        check_time("x", x)?;
        Ok(match *self {
            Self::Pareto { theta, alpha } => -(-alpha * (x / theta).ln_1p()).exp_m1(),
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::Deterministic { .. } => 1.0 - self.survival_nonneg(x),
        })
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        check_time("x", x)?;
        match *self {
            Self::Pareto { theta, alpha } => {
                Ok(alpha / theta * (-(alpha + 1.0) * (x / theta).ln_1p()).exp())
            }
            Self::Exponential { rate } => Ok(rate * (-rate * x).exp()),
            Self::Deterministic { .. } => Err(Error::Unsupported(
                "deterministic service has no density".into(),
            )),
        }
    }

    /// Inverse of [`cdf`](Self::cdf) on `[0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        Ok(match *self {
            Self::Pareto { theta, alpha } => theta * (-(-p).ln_1p() / alpha).exp_m1(),
            Self::Exponential { rate } => -(-p).ln_1p() / rate,
            Self::Deterministic { d } => d,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u).expect("u in [0, 1)")
    }

    pub fn moments(&self) -> Moments {
        match *self {
            Self::Pareto { theta, alpha } => {
                let mean = if alpha > 1.0 {
                    Moment::Finite(theta / (alpha - 1.0))
                } else {
                    Moment::Infinite
                };
                let (variance, scv) = if alpha > 2.0 {
                    (
                        Moment::Finite(
                            theta * theta * alpha / ((alpha - 1.0).powi(2) * (alpha - 2.0)),
                        ),
                        Moment::Finite(alpha / (alpha - 2.0)),
                    )
                } else if alpha > 1.0 {
                    (Moment::Infinite, Moment::Infinite)
                } else {
                    (Moment::Undefined, Moment::Undefined)
                };
                Moments {
                    mean,
                    variance,
                    scv,
                }
            }
            Self::Exponential { rate } => Moments {
                mean: Moment::Finite(1.0 / rate),
                variance: Moment::Finite(1.0 / (rate * rate)),
                scv: Moment::Finite(1.0),
            },
            Self::Deterministic { d } => Moments {
                mean: Moment::Finite(d),
                variance: Moment::Finite(0.0),
                scv: Moment::Finite(0.0),
            },
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.moments()
            .mean
            .finite()
            .ok_or_else(|| Error::Unsupported(format!("{self:?} has infinite mean")))
    }

    pub fn variance(&self) -> Result<f64> {
        match self.moments().variance {
            Moment::Finite(v) => Ok(v),
            Moment::Infinite => Err(Error::Unsupported(format!("{self:?} has infinite variance"))),
            Moment::Undefined => Err(Error::Unsupported(format!(
                "{self:?} has undefined variance"
            ))),
        }
    }

    pub fn scv(&self) -> Result<f64> {
        let v = self.variance()?;
        let m = self.mean()?;
        Ok(v / (m * m))
    }

    /// The stationary-excess law `S_e`.
    pub fn excess(&self) -> Result<ExcessDistribution> {
        self.mean()?;
        Ok(ExcessDistribution { base: *self })
    }

    /// `G_e^c(t) = (1 / E[S]) ∫_t^∞ G^c(u) du`.
    pub fn excess_ccdf(&self, t: f64) -> Result<f64> {
        check_time("t", t)?;
        self.mean()?;
        Ok(self.excess_survival(t))
    }

    pub fn excess_cdf(&self, t: f64) -> Result<f64> {
        check_time("t", t)?;
        self.mean()?;
        Ok(match *self {
            Self::Pareto { theta, alpha } => -(-(alpha - 1.0) * (t / theta).ln_1p()).exp_m1(),
            Self::Exponential { rate } => -(-rate * t).exp_m1(),
            Self::Deterministic { d } => (t / d).min(1.0),
        })
    }

    /// Assumes a finite mean; `t < 0` maps to 1.
    pub(crate) fn excess_survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            Self::Pareto { theta, alpha } => (-(alpha - 1.0) * (t / theta).ln_1p()).exp(),
            Self::Exponential { rate } => (-rate * t).exp(),
            Self::Deterministic { d } => (1.0 - t / d).max(0.0),
        }
    }

    /// `E[S_e] = E[S] (c_s² + 1) / 2`.
    pub fn excess_mean(&self) -> Result<f64> {
        let mean = self.mean()?;
        let scv = self.scv()?;
        Ok(match *self {
            Self::Pareto { theta, alpha } => theta / (alpha - 2.0),
            _ => 0.5 * mean * (scv + 1.0),
        })
    }

    pub fn excess_quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        self.mean()?;
        Ok(match *self {
            Self::Pareto { theta, alpha } => theta * (-(-p).ln_1p() / (alpha - 1.0)).exp_m1(),
            Self::Exponential { rate } => -(-p).ln_1p() / rate,
            Self::Deterministic { d } => d * p,
        })
    }

    /// Remaining-service survival for an individual with `elapsed` time in
    /// service: `H_x^c(t) = G^c(t + x) / G^c(x)`.
    ///
    /// For Pareto this is computed through the scaling form
    /// `G^c(t / (1 + x/θ))`, which is algebraically identical.
    pub fn conditional_remaining_ccdf(&self, elapsed: f64, t: f64) -> Result<f64> {
        check_time("elapsed", elapsed)?;
        check_time("t", t)?;
        let base = self.survival_nonneg(elapsed);
        if base <= 0.0 {
            return Err(Error::Degenerate(format!(
                "G^c({elapsed}) = 0: no individual can have been in service that long"
            )));
        }
        Ok(match *self {
            Self::Pareto { theta, .. } => self.survival_nonneg(t / (1.0 + elapsed / theta)),
            _ => self.survival_nonneg(t + elapsed) / base,
        })
    }

    /// Mean remaining service time after `elapsed` months in service.
    pub fn conditional_remaining_mean(&self, elapsed: f64) -> Result<f64> {
        check_time("elapsed", elapsed)?;
        if self.survival_nonneg(elapsed) <= 0.0 {
            return Err(Error::Degenerate(format!("G^c({elapsed}) = 0")));
        }
        Ok(match *self {
            Self::Pareto { theta, .. } => (1.0 + elapsed / theta) * self.mean()?,
            Self::Exponential { rate } => 1.0 / rate,
            Self::Deterministic { d } => d - elapsed,
        })
    }

    /// Quantile of the remaining time given `elapsed`, used for sampling.
    pub fn conditional_remaining_quantile(&self, elapsed: f64, p: f64) -> Result<f64> {
        check_time("elapsed", elapsed)?;
        check_prob(p)?;
        if self.survival_nonneg(elapsed) <= 0.0 {
            return Err(Error::Degenerate(format!("G^c({elapsed}) = 0")));
        }
        match *self {
            Self::Pareto { theta, alpha } => Self::Pareto {
                theta: theta + elapsed,
                alpha,
            }
            .quantile(p),
            Self::Exponential { .. } => self.quantile(p),
            Self::Deterministic { d } => Ok(d - elapsed),
        }
    }

    /// `∫_a^b G^c(s) ds` for `0 ≤ a ≤ b ≤ ∞`, in closed form.
    pub(crate) fn ccdf_integral(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a >= 0.0 && b >= a);
        if a == b {
            return 0.0;
        }
        match *self {
            Self::Pareto { theta, alpha } => {
                if b.is_infinite() && alpha <= 1.0 {
                    return f64::INFINITY;
                }
                if (alpha - 1.0).abs() < 1e-12 {
                    return theta * ((b + theta) / (a + theta)).ln();
                }
                // θ^α (s+θ)^{1-α} / (1-α) written as θ (θ/(s+θ))^{α-1} / (1-α)
                let anti = |s: f64| {
                    if s.is_infinite() {
                        0.0
                    } else {
                        theta * (-(alpha - 1.0) * (s / theta).ln_1p()).exp() / (1.0 - alpha)
                    }
                };
                anti(b) - anti(a)
            }
            Self::Exponential { rate } => {
                let eb = if b.is_infinite() { 0.0 } else { (-rate * b).exp() };
                ((-rate * a).exp() - eb) / rate
            }
            Self::Deterministic { d } => (b.min(d) - a.min(d)).max(0.0),
        }
    }

    /// `∫_a^b s G^c(s) ds` for `0 ≤ a ≤ b ≤ ∞`, in closed form.
    pub(crate) fn weighted_ccdf_integral(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a >= 0.0 && b >= a);
        if a == b {
            return 0.0;
        }
        match *self {
            Self::Pareto { theta, alpha } => {
                if b.is_infinite() && alpha <= 2.0 {
                    return f64::INFINITY;
                }
                let anti = |s: f64| -> f64 {
                    if s.is_infinite() {
                        return 0.0;
                    }
                    let lw = (s / theta).ln_1p();
                    // θ^α w^{2-α} = θ² (θ/w)^{α-2}; θ^α w^{1-α} = θ (θ/w)^{α-1}
                    let t2 = if (alpha - 2.0).abs() < 1e-12 {
                        theta * theta * lw
                    } else {
                        theta * theta * (-(alpha - 2.0) * lw).exp() / (2.0 - alpha)
                    };
                    let t1 = if (alpha - 1.0).abs() < 1e-12 {
                        theta * theta * lw
                    } else {
                        theta * theta * (-(alpha - 1.0) * lw).exp() / (1.0 - alpha)
                    };
                    t2 - t1
                };
                anti(b) - anti(a)
            }
            Self::Exponential { rate } => {
                let anti = |s: f64| -> f64 {
                    if s.is_infinite() {
                        0.0
                    } else {
                        -(-rate * s).exp() * (s / rate + 1.0 / (rate * rate))
                    }
                };
                anti(b) - anti(a)
            }
            Self::Deterministic { d } => {
                let hi = b.min(d);
                let lo = a.min(d);
                0.5 * (hi * hi - lo * lo)
            }
        }
    }
}

/// The stationary-excess law `S_e` of a service distribution with finite
/// mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessDistribution {
    pub base: ServiceDistribution,
}

impl ExcessDistribution {
    pub fn cdf(&self, t: f64) -> Result<f64> {
        self.base.excess_cdf(t)
    }

    pub fn ccdf(&self, t: f64) -> Result<f64> {
        self.base.excess_ccdf(t)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.base.excess_quantile(p)
    }

    pub fn mean(&self) -> Result<f64> {
        self.base.excess_mean()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.base.excess_quantile(u).expect("finite-mean base")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_to_infinity};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ccdf_examples() {
        let p = ServiceDistribution::pareto(10.44, 3.0).unwrap();
        assert_eq!(p.ccdf(0.0).unwrap(), 1.0);
        assert!(close(p.ccdf(10.44).unwrap(), 0.125, 1e-15));
        let e = ServiceDistribution::exponential(1.0).unwrap();
        assert!(close(e.ccdf(2f64.ln()).unwrap(), 0.5, 1e-15));
        let d = ServiceDistribution::deterministic(2.0).unwrap();
        assert_eq!(d.ccdf(1.999).unwrap(), 1.0);
        assert_eq!(d.ccdf(2.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_time_is_domain_error() {
        let p = ServiceDistribution::pareto(1.0, 3.0).unwrap();
        assert!(matches!(p.ccdf(-1.0), Err(Error::Domain(_))));
        assert!(matches!(p.excess_ccdf(-0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn moment_examples() {
        let p = ServiceDistribution::pareto(10.44, 3.0).unwrap();
        assert!(close(p.mean().unwrap(), 5.22, 1e-12));
        let p = ServiceDistribution::pareto(1.0, 3.0).unwrap();
        assert!(close(p.moments().scv.finite().unwrap(), 3.0, 1e-12));
        let p = ServiceDistribution::pareto(1.0, 1.5).unwrap();
        assert_eq!(p.moments().variance, Moment::Infinite);
        assert!(p.variance().is_err());
        let p = ServiceDistribution::pareto(1.0, 0.8).unwrap();
        assert_eq!(p.moments().mean, Moment::Infinite);
        assert_eq!(p.moments().variance, Moment::Undefined);
    }

    #[test]
    fn excess_examples() {
        for d in [
            ServiceDistribution::pareto(2.0, 3.0).unwrap(),
            ServiceDistribution::exponential(0.7).unwrap(),
            ServiceDistribution::deterministic(4.0).unwrap(),
        ] {
            assert_eq!(d.excess_ccdf(0.0).unwrap(), 1.0);
        }
        let e = ServiceDistribution::exponential(0.7).unwrap();
        for t in [0.1, 1.0, 5.0] {
            assert!(close(e.excess_ccdf(t).unwrap(), (-0.7 * t).exp(), 1e-15));
        }
        let p = ServiceDistribution::pareto(2.0, 3.0).unwrap();
        assert!(close(p.excess_ccdf(2.0).unwrap(), 0.25, 1e-15));
        // (2/4)^2 = 0.25; the quadrature route must agree with the closed form
        let q = integrate_to_infinity(|u| p.survival(u), 2.0).unwrap() / p.mean().unwrap();
        assert!(close(q, 0.25, 1e-9));
    }

    #[test]
    fn infinite_mean_excess_unsupported() {
        let p = ServiceDistribution::pareto(1.0, 0.9).unwrap();
        assert!(matches!(p.excess_ccdf(1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn excess_mean_examples() {
        let p = ServiceDistribution::pareto(3.0, 3.0).unwrap();
        assert!(close(p.excess_mean().unwrap(), 3.0, 1e-12));
        let d = ServiceDistribution::deterministic(5.0).unwrap();
        assert!(close(d.excess_mean().unwrap(), 2.5, 1e-12));
        let p = ServiceDistribution::pareto(10.44, 4.0).unwrap();
        let quad = integrate_to_infinity(|t| p.excess_survival(t), 0.0).unwrap();
        assert!(close(p.excess_mean().unwrap(), 5.22, 1e-12));
        assert!((quad - 5.22).abs() / 5.22 < 1e-6, "{quad}");
        let infinite = ServiceDistribution::pareto(1.0, 1.8).unwrap();
        assert!(matches!(infinite.excess_mean(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn conditional_remaining_examples() {
        let e = ServiceDistribution::exponential(0.4).unwrap();
        assert!(close(
            e.conditional_remaining_ccdf(5.0, 2.0).unwrap(),
            (-0.8f64).exp(),
            1e-14
        ));
        let p = ServiceDistribution::pareto(2.0, 3.0).unwrap();
        assert!(close(
            p.conditional_remaining_ccdf(0.0, 3.0).unwrap(),
            p.ccdf(3.0).unwrap(),
            1e-15
        ));
        let by_scaling = p.conditional_remaining_ccdf(2.0, 4.0).unwrap();
        let by_ratio = p.ccdf(6.0).unwrap() / p.ccdf(2.0).unwrap();
        assert!(close(by_scaling, 0.125, 1e-12));
        assert!(close(by_ratio, by_scaling, 1e-12));
        let d = ServiceDistribution::deterministic(3.0).unwrap();
        assert!(matches!(
            d.conditional_remaining_ccdf(3.0, 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn pareto_elapsed_scaling_of_mean() {
        let p = ServiceDistribution::pareto(10.44, 3.0).unwrap();
        for x in [0.0, 1.0, 5.0, 20.0, 100.0] {
            let quad =
                integrate_to_infinity(|t| p.conditional_remaining_ccdf(x, t).unwrap(), 0.0)
                    .unwrap();
            let expect = (1.0 + x / 10.44) * 5.22;
            assert!((quad - expect).abs() / expect < 1e-9, "x={x}: {quad} vs {expect}");
            assert!(close(p.conditional_remaining_mean(x).unwrap(), expect, 1e-12));
        }
    }

    #[test]
    fn closed_integrals_match_quadrature() {
        for d in [
            ServiceDistribution::pareto(3.0, 2.7).unwrap(),
            ServiceDistribution::pareto(3.0, 2.0).unwrap(),
            ServiceDistribution::exponential(0.3).unwrap(),
        ] {
            for (a, b) in [(0.0, 1.0), (0.5, 7.0), (2.0, 40.0)] {
                let q0 = integrate(|s| d.survival(s), a, b).unwrap();
                let q1 = integrate(|s| s * d.survival(s), a, b).unwrap();
                assert!(close(d.ccdf_integral(a, b), q0, 1e-9), "{d:?}");
                assert!(close(d.weighted_ccdf_integral(a, b), q1, 1e-8), "{d:?}");
            }
        }
        let d = ServiceDistribution::pareto(3.0, 3.5).unwrap();
        let q = integrate_to_infinity(|s| s * d.survival(s), 1.0).unwrap();
        assert!(close(d.weighted_ccdf_integral(1.0, f64::INFINITY), q, 1e-8));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let p = ServiceDistribution::pareto(10.44, 3.0).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"kind":"pareto","theta":10.44,"alpha":3.0}"#);
        let back: ServiceDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ServiceDistribution>(
            r#"{"kind":"pareto","theta":-1,"alpha":3}"#
        )
        .is_err());
    }

    fn any_dist() -> impl Strategy<Value = ServiceDistribution> {
        prop_oneof![
            (0.1f64..50.0, 0.3f64..12.0).prop_map(|(t, a)| ServiceDistribution::pareto(t, a).unwrap()),
            (0.01f64..5.0).prop_map(|r| ServiceDistribution::exponential(r).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(d in any_dist(), q in 0.001f64..0.999) {
            // pick x in the interior via the quantile, then round-trip
            let x = d.quantile(q).unwrap();
            let back = d.quantile(d.cdf(x).unwrap()).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.max(1e-300));
        }

        #[test]
        fn ccdf_monotone(d in any_dist(), scale in 0.1f64..100.0) {
            let mut prev = 1.0;
            for i in 0..1000 {
                let v = d.ccdf(scale * i as f64 / 10.0).unwrap();
                prop_assert!(v <= prev);
                prev = v;
            }
            prop_assert!(d.ccdf(1e300).unwrap() < 1e-6);
        }

        #[test]
        fn excess_closed_form_matches_quadrature(
            theta in 0.5f64..20.0, alpha in 2.2f64..8.0, frac in 0.0f64..1.0
        ) {
            let d = ServiceDistribution::pareto(theta, alpha).unwrap();
            let mean = d.mean().unwrap();
            let t = frac * 50.0 * mean;
            let quad = integrate_to_infinity(|u| d.survival(u), t).unwrap() / mean;
            prop_assert!((quad - d.excess_ccdf(t).unwrap()).abs() < 1e-8);
        }
    }
}
