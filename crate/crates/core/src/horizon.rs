//! Long-horizon questions: how long until a terminated system empties, and
//! how long a steady-state system takes to drain back from congestion.

use serde::{Deserialize, Serialize};

use crate::arrivals::ArrivalRate;
use crate::dist::{Moment, ServiceDistribution};
use crate::error::{Error, Result};
use crate::observed::RemainingTimeLaw;
use crate::quadrature::integrate_to_infinity;
use crate::roots::bisect_expanding;
use crate::stats::poisson_upper_tail;

/// Law of `T`, the time after arrivals stop at `γ` until the last departure.
///
/// `P[T ≤ x] = exp(−ν_γ G_γ^c(x))`.
#[derive(Debug, Clone)]
pub struct LastDepartureLaw {
    nu: f64,
    remaining: Option<RemainingTimeLaw>,
    dist: ServiceDistribution,
}

impl LastDepartureLaw {
    /// Arrivals follow `rate` up to `gamma` and stop there.
    pub fn new(rate: &ArrivalRate, dist: &ServiceDistribution, gamma: f64) -> Result<Self> {
        match RemainingTimeLaw::new(rate, dist, gamma) {
            Ok(r) => Ok(Self {
                nu: r.nu(),
                remaining: Some(r),
                dist: *dist,
            }),
            Err(Error::Degenerate(_)) => Ok(Self {
                nu: 0.0,
                remaining: None,
                dist: *dist,
            }),
            Err(e) => Err(e),
        }
    }

    /// Constant rate `lambda` running since −∞ and stopped at time 0.
    pub fn stationary(lambda: f64, dist: &ServiceDistribution) -> Result<Self> {
        let rate = ArrivalRate::constant(lambda)?;
        Self::new(&rate, dist, 0.0)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `G_γ^c(x)`, the remaining-time survival of one individual.
    pub fn remaining_ccdf(&self, x: f64) -> Result<f64> {
        match &self.remaining {
            Some(r) => r.ccdf(x),
            None => Ok(0.0),
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("x must be >= 0, got {x}")));
        }
        Ok((-self.nu * self.remaining_ccdf(x)?).exp())
    }

    /// `P[T > x]`, accurate in the far tail.
    pub fn ccdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("x must be >= 0, got {x}")));
        }
        Ok(-(-self.nu * self.remaining_ccdf(x)?).exp_m1())
    }

    /// Large-`x` approximation `ν_γ G_γ^c(x)` of `P[T > x]`.
    pub fn tail_approx(&self, x: f64) -> Result<f64> {
        Ok(self.nu * self.remaining_ccdf(x)?)
    }

    /// `q_T(x) = q_X(1 − ln(1/x)/ν)` for `e^{−ν} < x < 1`.
    pub fn quantile(&self, x: f64) -> Result<f64> {
        let floor = (-self.nu).exp();
        if !(x > floor && x < 1.0) {
            return Err(Error::OutOfRange(format!(
                "last-departure quantile needs exp(-nu) = {floor:.3e} < x < 1, got {x:e}"
            )));
        }
        let inner = 1.0 + x.ln() / self.nu;
        match &self.remaining {
            Some(r) => r.quantile(inner.clamp(0.0, 1.0 - f64::EPSILON)),
            None => Ok(0.0),
        }
    }

    /// `E[T^k] = ∫ k x^{k−1} P[T > x] dx`.
    pub fn moment(&self, k: u32) -> Result<Moment> {
        if k == 0 {
            return Ok(Moment::Finite(1.0));
        }
        if self.nu == 0.0 {
            return Ok(Moment::Finite(0.0));
        }
        // the remaining-time tail of a Pareto law decays like x^{1−α}
        if let ServiceDistribution::Pareto { alpha, .. } = self.dist {
            if k as f64 >= alpha - 1.0 {
                return Ok(Moment::Infinite);
            }
        }
        let kf = k as f64;
        let f = |x: f64| kf * x.powi(k as i32 - 1) * self.ccdf(x).unwrap_or(0.0);
        Ok(Moment::Finite(integrate_to_infinity(f, 0.0)?))
    }

    pub fn mean(&self) -> Result<Moment> {
        self.moment(1)
    }
}

/// Congestion at level `n` in a steady-state `M/G/∞` system with mean
/// occupancy `ν = λE[S]`, with recovery declared at level `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryProblem {
    pub lambda: f64,
    pub dist: ServiceDistribution,
    pub n: f64,
    pub k: f64,
}

impl RecoveryProblem {
    /// `k = None` uses the default recovery level `⌈ν + 1⌉`.
    pub fn new(lambda: f64, dist: ServiceDistribution, n: f64, k: Option<f64>) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        let nu = lambda * dist.mean()?;
        let k = k.unwrap_or_else(|| (nu + 1.0).ceil());
        if !(nu < k && k < n) {
            return Err(Error::Infeasible(format!(
                "recovery needs nu < k < n, got nu = {nu}, k = {k}, n = {n}"
            )));
        }
        Ok(Self { lambda, dist, n, k })
    }

    pub fn nu(&self) -> f64 {
        self.lambda * self.dist.mean().unwrap_or(f64::NAN)
    }

    /// Mean occupancy `t` months after congestion: `νG_e(t) + nG_e^c(t)`.
    pub fn mean_path(&self, t: f64) -> Result<f64> {
        let ge_c = self.dist.excess_ccdf(t)?;
        Ok(self.nu() * (1.0 - ge_c) + self.n * ge_c)
    }

    fn ratio(&self, nu: f64, n: f64, k: f64) -> Result<f64> {
        let r = (k - nu) / (n - nu);
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Infeasible(format!(
                "(k - nu)/(n - nu) = {r} is not in (0, 1)"
            )));
        }
        Ok(r)
    }
}

/// Solves `G_e^c(t) = r` for `r ∈ (0, 1)`: closed form for Pareto,
/// Exponential and Deterministic laws.
fn excess_root(dist: &ServiceDistribution, r: f64) -> Result<f64> {
    match *dist {
        ServiceDistribution::Pareto { theta, alpha } => {
            Ok(theta * ((-r.ln() / (alpha - 1.0)).exp_m1()))
        }
        _ => dist.excess_quantile(1.0 - r),
    }
}

/// Same root by bisection on `[0, hi]`, doubling `hi` until bracketed.
fn excess_root_bisect(dist: &ServiceDistribution, r: f64) -> Result<f64> {
    let scale = dist.mean()?;
    bisect_expanding(
        |t| dist.excess_ccdf(t).unwrap_or(0.0) - r,
        0.0,
        scale,
        1e-12,
    )
}

/// Mean recovery time `β` with `G_e^c(β) = (k − ν)/(n − ν)`.
pub fn recovery_time(p: &RecoveryProblem) -> Result<f64> {
    let r = p.ratio(p.nu(), p.n, p.k)?;
    excess_root(&p.dist, r)
}

/// [`recovery_time`] computed by bisection only.
pub fn recovery_time_by_bisection(p: &RecoveryProblem) -> Result<f64> {
    let r = p.ratio(p.nu(), p.n, p.k)?;
    excess_root_bisect(&p.dist, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Intervention {
    None,
    /// Arrival rate multiplied by `factor ∈ [0, 1]` from the congestion time.
    ScaleLambda { factor: f64 },
    /// Arrivals stop until level `k`, then resume; recovery continues to
    /// `resume_level` with `ν < resume_level < k`.
    PauseThenResume { resume_level: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPhase {
    pub from_level: f64,
    pub to_level: f64,
    pub nu: f64,
    pub months: f64,
}

/// Serialized as `{beta_months, k, n, nu, intervention}` plus the phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub beta_months: f64,
    pub k: f64,
    pub n: f64,
    pub nu: f64,
    pub intervention: Intervention,
    pub phases: Vec<RecoveryPhase>,
}

pub fn recovery_with_intervention(
    p: &RecoveryProblem,
    intervention: Intervention,
) -> Result<RecoveryResult> {
    let nu = p.nu();
    let phase = |from: f64, to: f64, nu: f64| -> Result<RecoveryPhase> {
        let r = p.ratio(nu, from, to)?;
        Ok(RecoveryPhase {
            from_level: from,
            to_level: to,
            nu,
            months: excess_root(&p.dist, r)?,
        })
    };
    let phases = match intervention {
        Intervention::None => vec![phase(p.n, p.k, nu)?],
        Intervention::ScaleLambda { factor } => {
            if !(0.0..=1.0).contains(&factor) {
                return Err(Error::invalid("factor", format!("must be in [0, 1], got {factor}")));
            }
            vec![phase(p.n, p.k, factor * nu)?]
        }
        Intervention::PauseThenResume { resume_level } => {
            if !(nu < resume_level && resume_level < p.k) {
                return Err(Error::Infeasible(format!(
                    "resume level needs nu < j < k, got nu = {nu}, j = {resume_level}, k = {}",
                    p.k
                )));
            }
            vec![phase(p.n, p.k, 0.0)?, phase(p.k, resume_level, nu)?]
        }
    };
    Ok(RecoveryResult {
        beta_months: phases.iter().map(|ph| ph.months).sum(),
        k: p.k,
        n: p.n,
        nu,
        intervention,
        phases,
    })
}

/// `P[N ≥ n]` for steady-state occupancy `N ~ Po(ν)`.
pub fn congestion_probability(nu: f64, n: u64) -> f64 {
    poisson_upper_tail(n, nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::poisson_ln_pmf;
    use proptest::prelude::*;

    fn pareto3(scv: f64) -> ServiceDistribution {
        ServiceDistribution::pareto_with_mean_scv(3.0, scv).unwrap()
    }

    #[test]
    fn last_departure_edges() {
        let law = LastDepartureLaw::stationary(10.0, &pareto3(3.0)).unwrap();
        assert!((law.nu() - 30.0).abs() < 1e-12);
        assert!((law.cdf(0.0).unwrap() - (-30.0f64).exp()).abs() < 1e-15);
        assert!(law.cdf(1e9).unwrap() > 1.0 - 1e-9);
        let empty = LastDepartureLaw::stationary(0.0, &pareto3(3.0)).unwrap();
        for x in [0.0, 1.0, 50.0] {
            assert_eq!(empty.cdf(x).unwrap(), 1.0);
        }
    }

    #[test]
    fn quantile_round_trip() {
        for scv in [3.0, 6.0] {
            let law = LastDepartureLaw::stationary(10.0, &pareto3(scv)).unwrap();
            for x in [0.5, 0.9, 0.99] {
                let q = law.quantile(x).unwrap();
                assert!((law.cdf(q).unwrap() - x).abs() < 1e-9);
            }
        }
        let law = LastDepartureLaw::stationary(0.1, &pareto3(3.0)).unwrap();
        assert!(matches!(law.quantile(0.5), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn pareto_closed_quantile() {
        let d = pareto3(3.0);
        let (theta, alpha) = match d {
            ServiceDistribution::Pareto { theta, alpha } => (theta, alpha),
            _ => unreachable!(),
        };
        let lambda = 10.0;
        let law = LastDepartureLaw::stationary(lambda, &d).unwrap();
        for x in [0.5, 0.9, 0.99] {
            let inner: f64 = 1.0 + (alpha - 1.0) * f64::ln(x) / (lambda * theta);
            let closed = (theta.powf(alpha - 1.0) / (1.0 - inner)).powf(1.0 / (alpha - 1.0)) - theta;
            let q = law.quantile(x).unwrap();
            assert!((q - closed).abs() < 1e-9 * closed, "{q} {closed}");
        }
    }

    #[test]
    fn heavier_tail_gives_later_quantiles() {
        let light = LastDepartureLaw::stationary(10.0, &pareto3(3.0)).unwrap();
        let heavy = LastDepartureLaw::stationary(10.0, &pareto3(6.0)).unwrap();
        assert!(heavy.quantile(0.9).unwrap() > light.quantile(0.9).unwrap());
    }

    #[test]
    fn cdf_is_poisson_mixture_of_maxima() {
        let rate = ArrivalRate::constant_from(10.0, 0.0).unwrap();
        let d = pareto3(3.0);
        let law = LastDepartureLaw::new(&rate, &d, 12.0).unwrap();
        let nu = law.nu();
        for x in [0.5, 3.0, 20.0, 200.0] {
            let g = 1.0 - law.remaining_ccdf(x).unwrap();
            let series: f64 = (0..400u64)
                .map(|j| (poisson_ln_pmf(j, nu) + j as f64 * g.ln()).exp())
                .sum();
            assert!((series - law.cdf(x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn tail_equivalence() {
        let law = LastDepartureLaw::stationary(10.0, &pareto3(3.0)).unwrap();
        let x = 1e7;
        let ratio = law.ccdf(x).unwrap() / law.tail_approx(x).unwrap();
        assert!((ratio - 1.0).abs() < 1e-3);
    }

    #[test]
    fn moments_respect_tail_index() {
        let law = LastDepartureLaw::stationary(10.0, &pareto3(3.0)).unwrap();
        assert!(matches!(law.moment(2).unwrap(), Moment::Infinite));
        assert!(matches!(law.mean().unwrap(), Moment::Finite(m) if m > 0.0));
    }

    fn recovery_grid() -> Vec<RecoveryProblem> {
        let mut out = Vec::new();
        for scv in [1.5, 3.0, 6.0] {
            for ratio in [1.1, 1.2, 1.5, 2.0, 2.5, 3.0] {
                let n: f64 = 30.0 * ratio;
                out.push(RecoveryProblem::new(10.0, pareto3(scv), n.round(), None).unwrap());
            }
        }
        out
    }

    #[test]
    fn recovery_closed_form_matches_bisection() {
        for p in recovery_grid() {
            assert_eq!(p.k, 31.0);
            let closed = recovery_time(&p).unwrap();
            let root = recovery_time_by_bisection(&p).unwrap();
            assert!((closed - root).abs() < 1e-10, "{closed} {root}");
            assert!((p.mean_path(closed).unwrap() - p.k).abs() < 1e-9);
        }
    }

    #[test]
    fn recovery_edges() {
        let d = pareto3(3.0);
        assert!(matches!(
            RecoveryProblem::new(10.0, d, 30.5, None),
            Err(Error::Infeasible(_))
        ));
        let p = RecoveryProblem::new(10.0, d, 60.0, Some(60.0 - 1e-9)).unwrap();
        assert!(recovery_time(&p).unwrap() < 1e-8);
        let base = recovery_time(&p).unwrap();
        let same = recovery_with_intervention(&p, Intervention::ScaleLambda { factor: 1.0 }).unwrap();
        assert_eq!(same.beta_months, base);
    }

    #[test]
    fn reduced_rate_recovers_faster() {
        for p in recovery_grid() {
            let base = recovery_with_intervention(&p, Intervention::None).unwrap();
            let cut = recovery_with_intervention(&p, Intervention::ScaleLambda { factor: 0.8 }).unwrap();
            assert!(cut.beta_months < base.beta_months);
        }
    }

    #[test]
    fn pause_schedule() {
        let d = pareto3(3.0);
        let p = RecoveryProblem::new(10.0, d, 60.0, Some(40.0)).unwrap();
        let r = recovery_with_intervention(&p, Intervention::PauseThenResume { resume_level: 33.0 }).unwrap();
        assert_eq!(r.phases.len(), 2);
        let first = r.phases[0];
        assert!((d.excess_ccdf(first.months).unwrap() - 40.0 / 60.0).abs() < 1e-12);
        let second = r.phases[1];
        assert!((d.excess_ccdf(second.months).unwrap() - 3.0 / 10.0).abs() < 1e-12);
        assert!((r.beta_months - first.months - second.months).abs() < 1e-12);
        assert!(recovery_with_intervention(&p, Intervention::PauseThenResume { resume_level: 45.0 }).is_err());
    }

    #[test]
    fn recovery_json_shape() {
        let p = recovery_grid()[3];
        let r = recovery_with_intervention(&p, Intervention::ScaleLambda { factor: 0.8 }).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["beta_months", "k", "n", "nu", "intervention"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["intervention"]["kind"], "scale_lambda");
    }

    #[test]
    fn congestion_probability_matches_gamma() {
        use statrs::function::gamma::gamma_lr;
        for n in [31u64, 45, 60, 90] {
            let got = congestion_probability(30.0, n);
            assert!((got - gamma_lr(n as f64, 30.0)).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn recovery_root_is_unique(
            lambda in 1.0f64..50.0,
            mean in 0.5f64..10.0,
            scv in 1.1f64..20.0,
            excess in 1.05f64..4.0,
            kpos in 0.05f64..0.95,
            expo in any::<bool>(),
        ) {
            let d = if expo {
                ServiceDistribution::exponential(1.0 / mean).unwrap()
            } else {
                ServiceDistribution::pareto_with_mean_scv(mean, scv).unwrap()
            };
            let nu = lambda * mean;
            let n = nu * excess + 1.0;
            let k = nu + kpos * (n - nu);
            let p = RecoveryProblem::new(lambda, d, n, Some(k)).unwrap();
            let closed = recovery_time(&p).unwrap();
            let root = recovery_time_by_bisection(&p).unwrap();
            prop_assert!((closed - root).abs() < 1e-10, "{} {}", closed, root);
        }
    }
}
