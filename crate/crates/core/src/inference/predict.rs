//! Posterior predictive occupancy.
//!
//! For each posterior draw `k` the mean `M⁽ᵏ⁾(τ+δ) = n p_τ(δ) + m̌(τ+δ)` is
//! computed and `Q̃⁽ᵏ⁾ ~ Po(M⁽ᵏ⁾)` sampled. `mean` and `sd` are the exact
//! moments of that mixture, `E[M]` and `√(E[M] + Var M)`; `mc_mean` and
//! `mc_sd` are the sample moments of the `Q̃⁽ᵏ⁾`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::closed::{m_check, p_tau};
use super::mcmc::{fit, Draw, McmcConfig, PosteriorDraws};
use super::posterior::PriorSpec;
use super::series::CountSeries;
use crate::error::{Error, Result};
use crate::observed::ObservedState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    LongTerm,
    ShortTerm,
}

/// A what-if applied to everything after `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Baseline,
    /// Arrivals after `τ` have mean service `mean_service_new`, with
    /// `θ = E[S_new](α − 1)` for each draw's `α`.
    ServiceSwitch { mean_service_new: f64 },
    /// Arrival rate after `τ` multiplied by `factor`.
    LambdaScale { factor: f64 },
    /// No arrivals in `[τ, τ + months)`.
    Pause { months: f64 },
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scenario::Baseline => Ok(()),
            Scenario::ServiceSwitch { mean_service_new } if mean_service_new.is_finite() && mean_service_new > 0.0 => Ok(()),
            Scenario::ServiceSwitch { .. } => Err(Error::invalid("mean_service_new", "must be > 0")),
            Scenario::LambdaScale { factor } if factor.is_finite() && factor >= 0.0 => Ok(()),
            Scenario::LambdaScale { .. } => Err(Error::invalid("factor", "must be finite and >= 0")),
            Scenario::Pause { months } if months.is_finite() && months >= 0.0 => Ok(()),
            Scenario::Pause { .. } => Err(Error::invalid("months", "must be finite and >= 0")),
        }
    }

    /// `M(τ+δ)` for one draw.
    pub fn mean(&self, d: &Draw, tau: f64, delta: f64, n: u64) -> Result<f64> {
        let (b0, b1, a, th) = (d.beta0, d.beta1, d.alpha, d.theta);
        let survivors = n as f64 * p_tau(b0, b1, a, th, tau, delta)?;
        let arrivals = match *self {
            Scenario::Baseline => m_check(b0, b1, a, th, tau, delta)?,
            Scenario::ServiceSwitch { mean_service_new } => {
                m_check(b0, b1, a, mean_service_new * (a - 1.0), tau, delta)?
            }
            Scenario::LambdaScale { factor } => factor * m_check(b0, b1, a, th, tau, delta)?,
            Scenario::Pause { months } => {
                if delta > months {
                    m_check(b0, b1, a, th, tau + months, delta - months)?
                } else {
                    0.0
                }
            }
        };
        Ok(survivors + arrivals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    /// Months after the conditioning observation of the whole series.
    pub delta: u32,
    pub month: i64,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub mc_mean: f64,
    pub mc_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub mode: Mode,
    pub scenario: Scenario,
    pub tau: i64,
    pub n: u64,
    pub seed: u64,
    pub points: Vec<PredictionPoint>,
}

impl PredictionSeries {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    pub fn sds(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sd).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "delta", "mean", "sd", "lower", "upper", "mc_mean", "mc_sd"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for p in &self.points {
            w.write_record([
                p.month.to_string(),
                p.delta.to_string(),
                p.mean.to_string(),
                p.sd.to_string(),
                p.lower.to_string(),
                p.upper.to_string(),
                p.mc_mean.to_string(),
                p.mc_sd.to_string(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn one_horizon(
    draws: &PosteriorDraws,
    tau: i64,
    n: u64,
    delta: u32,
    scenario: &Scenario,
    rng: &mut ChaCha8Rng,
) -> Result<PredictionPoint> {
    let month = tau + delta as i64;
    if delta == 0 {
        let v = n as f64;
        return Ok(PredictionPoint { delta, month, mean: v, sd: 0.0, lower: v, upper: v, mc_mean: v, mc_sd: 0.0 });
    }
    let k = draws.len() as f64;
    let (mut s_m, mut s_m2, mut s_q, mut s_q2) = (0.0, 0.0, 0.0, 0.0);
    for d in &draws.draws {
        let m = scenario.mean(d, tau as f64, delta as f64, n)?;
        let q = if m > 0.0 {
            Poisson::new(m).map_err(|e| Error::invalid("mean", e.to_string()))?.sample(rng)
        } else {
            0.0
        };
        s_m += m;
        s_m2 += m * m;
        s_q += q;
        s_q2 += q * q;
    }
    let mean = s_m / k;
    let var_m = (s_m2 / k - mean * mean).max(0.0);
    let sd = (mean + var_m).sqrt();
    let mc_mean = s_q / k;
    let mc_sd = if k > 1.0 {
        ((s_q2 - k * mc_mean * mc_mean) / (k - 1.0)).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(PredictionPoint {
        delta,
        month,
        mean,
        sd,
        lower: mean - 2.0 * sd,
        upper: mean + 2.0 * sd,
        mc_mean,
        mc_sd,
    })
}

/// Predicts `δ` months past an observation of `n` at month `tau`.
pub fn predict_from(
    draws: &PosteriorDraws,
    tau: i64,
    n: u64,
    horizons: &[u32],
    scenario: &Scenario,
    seed: u64,
) -> Result<PredictionSeries> {
    if draws.is_empty() {
        return Err(Error::invalid("draws", "posterior has no draws"));
    }
    draws.require_converged()?;
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = horizons
        .iter()
        .map(|&d| one_horizon(draws, tau, n, d, scenario, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSeries {
        mode: Mode::LongTerm,
        scenario: *scenario,
        tau,
        n,
        seed,
        points,
    })
}

/// Long-term prediction from a single-class observed state.
pub fn predict(draws: &PosteriorDraws, state: &ObservedState, horizons: &[u32], seed: u64) -> Result<PredictionSeries> {
    state.validate()?;
    let class = match state.classes.as_slice() {
        [c] => c,
        [] => return Err(Error::invalid("state", "no class observed")),
        _ => return Err(Error::invalid("state", "predict takes one class at a time")),
    };
    if state.tau.fract() != 0.0 {
        return Err(Error::invalid("tau", "must be a whole month index"));
    }
    predict_from(draws, state.tau as i64, class.n, horizons, &Scenario::Baseline, seed)
}

/// `1..=q`.
pub fn horizons(q: u32) -> Vec<u32> {
    (1..=q).collect()
}

/// One-step-ahead predictions over `future`, refitting after each realized
/// month is appended to `history`.
pub fn predict_short_term(
    history: &CountSeries,
    future: &CountSeries,
    priors: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<PredictionSeries> {
    let (tau0, n0) = history
        .last()
        .ok_or_else(|| Error::invalid("series", "must not be empty"))?;
    let mut known = history.clone();
    let mut points = Vec::with_capacity(future.len());
    for (i, &(t, n)) in future.points.iter().enumerate() {
        let step_cfg = McmcConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..*cfg
        };
        let post = fit(&known, priors, &step_cfg)?;
        let (tau, n_prev) = known.last().expect("non-empty");
        let gap = u32::try_from(t - tau).map_err(|_| Error::invalid("future", "months must follow the history"))?;
        let p = predict_from(&post, tau, n_prev, &[gap], &Scenario::Baseline, step_cfg.seed)?;
        points.push(PredictionPoint {
            delta: (t - tau0) as u32,
            ..p.points[0]
        });
        known.push(t, n)?;
    }
    Ok(PredictionSeries {
        mode: Mode::ShortTerm,
        scenario: Scenario::Baseline,
        tau: tau0,
        n: n0,
        seed: cfg.seed,
        points,
    })
}

/// `√(q⁻¹ Σ (n_{τ+δ} − μ(τ+δ))²)` over the predicted months.
pub fn rmse(pred: &PredictionSeries, actual: &CountSeries) -> Result<f64> {
    if pred.points.is_empty() {
        return Err(Error::invalid("pred", "no predicted months"));
    }
    let mut ss = 0.0;
    for p in &pred.points {
        let n = actual
            .count_at(p.month)
            .ok_or_else(|| Error::invalid("actual", format!("no observation for month {}", p.month)))?;
        ss += (n as f64 - p.mean).powi(2);
    }
    Ok((ss / pred.points.len() as f64).sqrt())
}
