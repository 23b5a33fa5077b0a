//! Transient laws of the `M_t/G/∞` queue, with and without an observation.
//!
//! Every quantity here is a Poisson mean over a region of the
//! (arrival time, service time) plane. [`Region`] describes "arrived in
//! `[from, to]` and still present at `at`" and [`region_mass`] computes its
//! mean `∫_from^to λ(u) G^c(at − u) du`. From it:
//!
//! * `m(t)`        = mass of (−∞, t] present at `t`
//! * `ν_τ`         = mass of (−∞, τ] present at `τ`
//! * `ν_τ p_τ(δ)`  = mass of (−∞, τ] present at `τ + δ`
//! * `m̌(τ + δ)`    = mass of [τ, τ + δ] present at `τ + δ`
//!
//! Because every rate is piecewise linear, the mass has a closed form for all
//! supported service laws. [`region_mass_by_quadrature`] evaluates the same
//! integral numerically and is kept as an independent check.

use serde::{Deserialize, Serialize};

use crate::arrivals::ArrivalRate;
use crate::dist::ServiceDistribution;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::roots::bisect_expanding;
use crate::stats::{binomial_ln_pmf, poisson_ln_pmf};

/// Arrivals in `[from, to]` that are still in service at time `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub from: f64,
    pub to: f64,
    pub at: f64,
}

impl Region {
    pub fn new(from: f64, to: f64, at: f64) -> Result<Self> {
        if from.is_nan() || to.is_nan() || at.is_nan() || from > to || to > at {
            return Err(Error::Domain(format!(
                "region needs from <= to <= at, got ({from}, {to}, {at})"
            )));
        }
        Ok(Self { from, to, at })
    }
}

fn finite_mass(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v.max(0.0))
    } else {
        Err(Error::Unsupported(format!(
            "{what} is infinite for this service law and rate"
        )))
    }
}

/// Poisson mean `N(A)` of a region, in closed form.
pub fn region_mass(rate: &ArrivalRate, dist: &ServiceDistribution, region: Region) -> Result<f64> {
    let c = region.at;
    let mut total = 0.0;
    for p in rate.pieces(region.from, region.to)? {
        // u = c - s maps the piece [start, end] to s in [c - end, c - start]
        let s_lo = (c - p.end).max(0.0);
        let s_hi = c - p.start;
        let level = p.c0 + p.c1 * c;
        let i0 = dist.ccdf_integral(s_lo, s_hi);
        let mut part = level * i0;
        if p.c1 != 0.0 {
            part -= p.c1 * dist.weighted_ccdf_integral(s_lo, s_hi);
        }
        total += part;
    }
    finite_mass(total, "region mass")
}

/// The same integral as [`region_mass`], evaluated by adaptive quadrature.
pub fn region_mass_by_quadrature(
    rate: &ArrivalRate,
    dist: &ServiceDistribution,
    region: Region,
) -> Result<f64> {
    let c = region.at;
    let mut total = 0.0;
    for p in rate.pieces(region.from, region.to)? {
        let f = |s: f64| (p.c0 + p.c1 * (c - s)) * dist.survival(s);
        let s_lo = (c - p.end).max(0.0);
        let s_hi = c - p.start;
        total += if s_hi.is_infinite() {
            integrate_to_infinity(f, s_lo)?
        } else {
            integrate_deterministic_aware(&f, dist, s_lo, s_hi)?
        };
    }
    finite_mass(total, "region mass")
}

/// Splits finite integrals at the jump of a deterministic survival function.
fn integrate_deterministic_aware<F: Fn(f64) -> f64>(
    f: &F,
    dist: &ServiceDistribution,
    a: f64,
    b: f64,
) -> Result<f64> {
    if let ServiceDistribution::Deterministic { d } = *dist {
        if a < d && d < b {
            return Ok(integrate(f, a, d)? + integrate(f, d, b)?);
        }
    }
    integrate(f, a, b)
}

/// Mean occupancy `m(t)` of a system that is empty before the rate's
/// arrivals start. `t = +∞` gives the steady state of a constant rate.
pub fn unconditional_mean(rate: &ArrivalRate, dist: &ServiceDistribution, t: f64) -> Result<f64> {
    if t == f64::INFINITY {
        return match rate.as_constant() {
            Some(lambda) => Ok(lambda * dist.mean()?),
            None => Err(Error::Unsupported(
                "steady state is defined for constant rates only".into(),
            )),
        };
    }
    region_mass(rate, dist, Region::new(f64::NEG_INFINITY, t, t)?)
}

/// Departure rate `λ⁻(t) = E[λ(t − S)]`.
pub fn departure_rate(rate: &ArrivalRate, dist: &ServiceDistribution, t: f64) -> Result<f64> {
    if t == f64::INFINITY {
        return rate.as_constant().ok_or_else(|| {
            Error::Unsupported("steady state is defined for constant rates only".into())
        });
    }
    let mut total = 0.0;
    for p in rate.pieces(f64::NEG_INFINITY, t)? {
        // service u in [t - end, t - start]
        let s_lo = (t - p.end).max(0.0);
        let s_hi = t - p.start;
        let surv_lo = dist.survival(s_lo);
        let surv_hi = if s_hi.is_infinite() {
            0.0
        } else {
            dist.survival(s_hi)
        };
        let level = p.c0 + p.c1 * t;
        let mut part = level * (surv_lo - surv_hi);
        if p.c1 != 0.0 {
            // ∫ u g(u) du = [−u G^c(u)] + ∫ G^c
            let tail = if s_hi.is_infinite() { 0.0 } else { s_hi * surv_hi };
            let first = s_lo * surv_lo - tail + dist.ccdf_integral(s_lo, s_hi);
            part -= p.c1 * first;
        }
        total += part;
    }
    finite_mass(total, "departure rate")
}

/// `ν_τ`, the mean number present at `τ` for a system observed without
/// elapsed times.
pub fn nu_tau(rate: &ArrivalRate, dist: &ServiceDistribution, tau: f64) -> Result<f64> {
    region_mass(rate, dist, Region::new(f64::NEG_INFINITY, tau, tau)?)
}

/// `p_τ(x) = G_τ^c(x)`: probability that someone present at `τ` (elapsed
/// time unknown) is still present at `τ + x`.
pub fn remaining_survival(
    rate: &ArrivalRate,
    dist: &ServiceDistribution,
    tau: f64,
    x: f64,
) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("x must be >= 0, got {x}")));
    }
    let nu = nu_tau(rate, dist, tau)?;
    if nu <= 0.0 {
        return Err(Error::Degenerate(format!(
            "nobody can be present at tau = {tau} (nu_tau = 0)"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let still = region_mass(rate, dist, Region::new(f64::NEG_INFINITY, tau, tau + x)?)?;
    Ok((still / nu).clamp(0.0, 1.0))
}

/// `m̌(τ + δ)`: mean number at `τ + δ` among arrivals after `τ`.
pub fn m_check(
    rate: &ArrivalRate,
    dist: &ServiceDistribution,
    tau: f64,
    delta: f64,
) -> Result<f64> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    region_mass(rate, dist, Region::new(tau, tau + delta, tau + delta)?)
}

/// The remaining-service law `X_τ` of someone present at `τ` with unknown
/// elapsed time.
#[derive(Debug, Clone)]
pub struct RemainingTimeLaw {
    rate: ArrivalRate,
    dist: ServiceDistribution,
    tau: f64,
    nu: f64,
}

impl RemainingTimeLaw {
    pub fn new(rate: &ArrivalRate, dist: &ServiceDistribution, tau: f64) -> Result<Self> {
        let nu = nu_tau(rate, dist, tau)?;
        if nu <= 0.0 {
            return Err(Error::Degenerate(format!("nu_tau = 0 at tau = {tau}")));
        }
        Ok(Self {
            rate: rate.clone(),
            dist: *dist,
            tau,
            nu,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Stationary case: constant rate running since −∞, where `X_τ = S_e`.
    fn is_stationary(&self) -> bool {
        self.rate.arrivals_start() == f64::NEG_INFINITY
            && self.rate.as_constant().is_some()
    }

    pub fn ccdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("x must be >= 0, got {x}")));
        }
        if self.is_stationary() {
            return self.dist.excess_ccdf(x);
        }
        if x == 0.0 {
            return Ok(1.0);
        }
        let still = region_mass(
            &self.rate,
            &self.dist,
            Region::new(f64::NEG_INFINITY, self.tau, self.tau + x)?,
        )?;
        Ok((still / self.nu).clamp(0.0, 1.0))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.ccdf(x)?)
    }

    /// Closed form in the stationary case, bisection to 1e-10 otherwise.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("p must be in [0, 1), got {p}")));
        }
        if self.is_stationary() {
            return self.dist.excess_quantile(p);
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        let target = 1.0 - p;
        let scale = self.dist.mean().unwrap_or(1.0);
        bisect_expanding(
            |x| self.ccdf(x).unwrap_or(0.0) - target,
            0.0,
            scale,
            1e-10,
        )
    }
}

/// `Q(τ + δ) | Q(τ) = n  ~  Bi(n, p) + Po(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalOccupancyLaw {
    pub n: u64,
    pub p: f64,
    pub m: f64,
}

/// Poisson tail mass below which the convolution is truncated.
const POISSON_TAIL: f64 = 1e-12;

fn poisson_table(m: f64) -> Vec<f64> {
    if m <= 0.0 {
        return vec![1.0];
    }
    let hi = (m + 12.0 * (m + 1.0).sqrt() + 30.0).ceil() as u64;
    let mut table: Vec<f64> = (0..=hi).map(|k| poisson_ln_pmf(k, m).exp()).collect();
    let mut tail = 0.0;
    while let Some(&last) = table.last() {
        if table.len() > 1 && tail + last < POISSON_TAIL && (table.len() as f64) > m {
            tail += last;
            table.pop();
        } else {
            break;
        }
    }
    table
}

impl ConditionalOccupancyLaw {
    pub fn new(n: u64, p: f64, m: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("p", format!("must be in [0, 1], got {p}")));
        }
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::invalid("m", format!("must be finite and >= 0, got {m}")));
        }
        Ok(Self { n, p, m })
    }

    pub fn mean(&self) -> f64 {
        self.n as f64 * self.p + self.m
    }

    pub fn variance(&self) -> f64 {
        self.n as f64 * self.p * (1.0 - self.p) + self.m
    }

    /// Full probability vector `P[Q = y]` for `y = 0..len`, computed by
    /// Binomial–Poisson convolution of log-space pmfs.
    pub fn pmf_table(&self) -> Vec<f64> {
        let pois = poisson_table(self.m);
        let n = self.n;
        let binom: Vec<f64> = (0..=n).map(|k| binomial_ln_pmf(k, n, self.p).exp()).collect();
        let lo = binom.iter().position(|&v| v > 1e-300).unwrap_or(0);
        let hi = binom.iter().rposition(|&v| v > 1e-300).unwrap_or(0);
        let mut out = vec![0.0; hi + pois.len()];
        for (k, &b) in binom.iter().enumerate().take(hi + 1).skip(lo) {
            for (j, &q) in pois.iter().enumerate() {
                out[k + j] += b * q;
            }
        }
        out
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.pmf_table().get(y as usize).copied().unwrap_or(0.0)
    }

    pub fn cdf(&self, y: u64) -> f64 {
        let t = self.pmf_table();
        t.iter().take(y as usize + 1).sum::<f64>().min(1.0)
    }

    /// Smallest `y` with `P[Q ≤ y] ≥ q`.
    pub fn quantile(&self, q: f64) -> Result<u64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::OutOfRange(format!("q must be in [0, 1], got {q}")));
        }
        let t = self.pmf_table();
        let mut acc = 0.0;
        for (y, &v) in t.iter().enumerate() {
            acc += v;
            if acc >= q - 1e-15 {
                return Ok(y as u64);
            }
        }
        Ok(t.len().saturating_sub(1) as u64)
    }

    /// Mean of the approximating Poisson law.
    pub fn poisson_approx_mean(&self) -> f64 {
        self.mean()
    }

    /// Total-variation distance to `Po(mean)`, by direct pmf summation.
    pub fn tv_to_poisson_approx(&self) -> f64 {
        let exact = self.pmf_table();
        let mu = self.poisson_approx_mean();
        let approx = poisson_table(mu);
        let len = exact.len().max(approx.len());
        let mut diff = 0.0;
        for y in 0..len {
            let a = exact.get(y).copied().unwrap_or(0.0);
            let b = approx.get(y).copied().unwrap_or(0.0);
            diff += (a - b).abs();
        }
        // mass dropped by either truncation counts as disagreement
        let missing = (1.0 - exact.iter().sum::<f64>()).abs() + (1.0 - approx.iter().sum::<f64>()).abs();
        0.5 * (diff + missing)
    }
}

/// A law together with where it came from, as exchanged with the API layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    #[serde(flatten)]
    pub law: ConditionalOccupancyLaw,
    pub tau: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_id: Option<String>,
}

/// The observed-queue law of `Q(τ + δ)` given `Q(τ) = n`.
pub fn conditional_law(
    rate: &ArrivalRate,
    dist: &ServiceDistribution,
    tau: f64,
    delta: f64,
    n: u64,
) -> Result<ConditionalOccupancyLaw> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return ConditionalOccupancyLaw::new(n, 1.0, 0.0);
    }
    let m = m_check(rate, dist, tau, delta)?;
    let p = match remaining_survival(rate, dist, tau, delta) {
        Ok(p) => p,
        Err(Error::Degenerate(_)) if n == 0 => 0.0,
        Err(e) => return Err(e),
    };
    ConditionalOccupancyLaw::new(n, p, m)
}

/// Mean of the high-load Poisson approximation `Po(n p_τ(δ) + m̌(τ + δ))`.
pub fn poisson_approx_law(
    rate: &ArrivalRate,
    dist: &ServiceDistribution,
    tau: f64,
    delta: f64,
    n: u64,
) -> Result<f64> {
    Ok(conditional_law(rate, dist, tau, delta, n)?.poisson_approx_mean())
}

/// One class of an observation: a head-count, optionally with the elapsed
/// service time of each individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassObservation {
    pub class_id: String,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed: Option<Vec<f64>>,
}

/// Head-counts at observation time `tau`. Classes are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedState {
    pub tau: f64,
    pub classes: Vec<ClassObservation>,
}

impl ObservedState {
    pub fn single(tau: f64, n: u64) -> Self {
        Self {
            tau,
            classes: vec![ClassObservation {
                class_id: "all".into(),
                n,
                elapsed: None,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::invalid("tau", "must be finite"));
        }
        for c in &self.classes {
            if let Some(e) = &c.elapsed {
                if e.len() as u64 != c.n {
                    return Err(Error::invalid(
                        "elapsed",
                        format!("class {}: {} elapsed times for n = {}", c.class_id, e.len(), c.n),
                    ));
                }
                if e.iter().any(|y| !(y.is_finite() && *y >= 0.0)) {
                    return Err(Error::invalid("elapsed", "entries must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn class(&self, class_id: &str) -> Option<&ClassObservation> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

/// Prediction at `τ + δ` for a class whose elapsed service times are known.
///
/// The initial cohort contributes independent Bernoulli survivors with
/// probabilities `H_{y_i}^c(δ)`; later arrivals contribute `Po(m̌(τ + δ))`.
pub fn elapsed_informed_prediction(
    class: &ClassObservation,
    tau: f64,
    rate: &ArrivalRate,
    dist: &ServiceDistribution,
    delta: f64,
) -> Result<MeanVariance> {
    let elapsed = class.elapsed.as_ref().ok_or_else(|| {
        Error::invalid("elapsed", format!("class {} has no elapsed times", class.class_id))
    })?;
    if elapsed.len() as u64 != class.n {
        return Err(Error::invalid("elapsed", "length must equal n"));
    }
    let mut mean = 0.0;
    let mut variance = 0.0;
    for &y in elapsed {
        let h = dist.conditional_remaining_ccdf(y, delta)?;
        mean += h;
        variance += h * (1.0 - h);
    }
    let arrivals = m_check(rate, dist, tau, delta)?;
    Ok(MeanVariance {
        mean: mean + arrivals,
        variance: variance + arrivals,
    })
}

/// Mean occupancy at `τ + δ` when the service law switches at `τ`: the
/// pre-`τ` population keeps the old law, arrivals after `τ` get the new one.
pub fn service_switch_mean(
    rate: &ArrivalRate,
    old: &ServiceDistribution,
    new: &ServiceDistribution,
    tau: f64,
    delta: f64,
) -> Result<f64> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    let survivors = region_mass(rate, old, Region::new(f64::NEG_INFINITY, tau, tau + delta)?)?;
    Ok(survivors + m_check(rate, new, tau, delta)?)
}

/// As [`service_switch_mean`] but conditioned on an observed count `n` at
/// `τ`.
pub fn service_switch_conditional_mean(
    rate: &ArrivalRate,
    old: &ServiceDistribution,
    new: &ServiceDistribution,
    tau: f64,
    delta: f64,
    n: u64,
) -> Result<f64> {
    let law = conditional_law(rate, old, tau, delta, n)?;
    Ok(n as f64 * law.p + m_check(rate, new, tau, delta)?)
}
