//! Adaptive random-walk Metropolis with multi-chain diagnostics.
//!
//! During warmup the proposal covariance tracks the empirical covariance of
//! the chain and a global scale follows a Robbins–Monro recursion towards a
//! 23% acceptance rate. Both are frozen after warmup.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::{log_likelihood, log_posterior, log_prior, Params, PriorSpec};
use super::series::CountSeries;
use crate::error::{Error, Result};

const TARGET_ACCEPTANCE: f64 = 0.23;
pub const R_HAT_LIMIT: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub chains: usize,
    /// Per chain, warmup included.
    pub iterations: usize,
    /// Defaults to `iterations / 2`.
    pub warmup: Option<usize>,
    pub seed: u64,
    pub max_restarts: usize,
    /// Sample from the prior alone.
    pub prior_only: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 2,
            iterations: 10_000,
            warmup: None,
            seed: 0,
            max_restarts: 2,
            prior_only: false,
        }
    }
}

impl McmcConfig {
    pub fn with_iterations(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            ..Self::default()
        }
    }

    pub fn warmup(&self) -> usize {
        self.warmup.unwrap_or(self.iterations / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::invalid("chains", "at least 2 chains are needed for r_hat"));
        }
        if self.warmup() >= self.iterations || self.iterations - self.warmup() < 4 {
            return Err(Error::invalid("iterations", "need at least 4 post-warmup iterations"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r_hat: BTreeMap<String, f64>,
    pub ess: BTreeMap<String, f64>,
    /// Post-warmup acceptance rate per chain.
    pub acceptance: Vec<f64>,
    pub restarts: usize,
}

impl Diagnostics {
    pub fn max_r_hat(&self) -> f64 {
        self.r_hat.values().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Post-warmup draws for each chain, `chains[c][i][j]` for parameter `j`.
#[derive(Debug, Clone)]
struct ChainSet {
    chains: Vec<Vec<Vec<f64>>>,
    acceptance: Vec<f64>,
}

fn chain_rng(seed: u64, restart: usize, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((restart as u64) << 16) | chain as u64);
    rng
}

fn run_chain<F>(logp: &F, x0: Vec<f64>, scale0: &[f64], iterations: usize, warmup: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let mut x = DVector::from_vec(x0);
    let mut lp = logp(x.as_slice());
    let mut chol = DMatrix::from_diagonal(&DVector::from_iterator(d, scale0.iter().copied()));
    let mut log_scale = 0.0f64;
    // running moments for covariance adaptation
    let mut mean = x.clone();
    let mut m2 = DMatrix::<f64>::zeros(d, d);
    let mut count = 0usize;
    let adapt_from = warmup / 5;
    let base = 2.38 * 2.38 / d as f64;

    let mut kept = Vec::with_capacity(iterations - warmup);
    let mut accepted = 0usize;
    for i in 0..iterations {
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let prop = &x + (&chol * z) * log_scale.exp();
        let lp_prop = logp(prop.as_slice());
        let log_u: f64 = rng.random::<f64>().ln();
        let accept_prob = if lp_prop.is_nan() { 0.0 } else { (lp_prop - lp).min(0.0).exp() };
        if log_u < lp_prop - lp {
            x = prop;
            lp = lp_prop;
            if i >= warmup {
                accepted += 1;
            }
        }
        if i < warmup {
            let gain = 1.0 / ((i + 1) as f64).powf(0.6);
            log_scale += gain * (accept_prob - TARGET_ACCEPTANCE);
            if i >= adapt_from {
                count += 1;
                let delta = &x - &mean;
                mean += &delta / count as f64;
                m2 += &delta * (&x - &mean).transpose();
                if count >= 2 * d + 10 && count.is_multiple_of(25) {
                    let emp = &m2 / (count - 1) as f64;
                    let jitter = DMatrix::from_diagonal(&DVector::from_iterator(
                        d,
                        (0..d).map(|j| 1e-10 * (emp[(j, j)].abs() + 1e-12)),
                    ));
                    let candidate = emp * base + jitter;
                    if let Some(c) = candidate.cholesky() {
                        chol = c.l();
                        log_scale = 0.0;
                    }
                }
            } else if i + 1 == adapt_from {
                mean = x.clone();
            }
        } else {
            kept.push(x.as_slice().to_vec());
        }
    }
    (kept, accepted as f64 / (iterations - warmup) as f64)
}

fn run_chains<F, I>(logp: &F, init: &I, scale0: &[f64], cfg: &McmcConfig, restart: usize, factor: usize) -> ChainSet
where
    F: Fn(&[f64]) -> f64 + Sync,
    I: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    let iterations = cfg.iterations * factor;
    let warmup = cfg.warmup() * factor;
    let results: Vec<(Vec<Vec<f64>>, f64)> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(cfg.seed, restart, c);
            let x0 = init(&mut rng);
            run_chain(logp, x0, scale0, iterations, warmup, &mut rng)
        })
        .collect();
    let (chains, acceptance) = results.into_iter().unzip();
    ChainSet { chains, acceptance }
}

fn column(chains: &[Vec<Vec<f64>>], j: usize) -> Vec<Vec<f64>> {
    chains.iter().map(|c| c.iter().map(|x| x[j]).collect()).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R̂ for one parameter given per-chain traces.
pub fn split_r_hat(chains: &[Vec<f64>]) -> f64 {
    let mut halves = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let h = c.len() / 2;
        halves.push(&c[..h]);
        halves.push(&c[c.len() - h..]);
    }
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| var(h)).collect::<Vec<_>>());
    let b = n * var(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    (0..=max_lag)
        .map(|t| (0..n - t).map(|i| (x[i] - m) * (x[i + t] - m)).sum::<f64>() / n as f64)
        .collect()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 {
        return 0.0;
    }
    let max_lag = n - 1;
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(&c[..n], max_lag)).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let w = mean(&acov.iter().map(|a| a[0] * n as f64 / (n as f64 - 1.0)).collect::<Vec<_>>());
    let b_over_n = if chains.len() > 1 { var(&chain_means) } else { 0.0 };
    let var_plus = w * (n as f64 - 1.0) / n as f64 + b_over_n;
    if var_plus <= 0.0 {
        return m * n as f64;
    }
    let rho = |t: usize| 1.0 - (w - mean(&acov.iter().map(|a| a[t]).collect::<Vec<_>>())) / var_plus;

    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t < max_lag {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / (m * n as f64).log10().max(1.0));
    m * n as f64 / tau
}

fn diagnostics(set: &ChainSet, names: &[&str], restarts: usize) -> Diagnostics {
    let mut r_hat = BTreeMap::new();
    let mut ess = BTreeMap::new();
    for (j, name) in names.iter().enumerate() {
        let col = column(&set.chains, j);
        r_hat.insert(name.to_string(), split_r_hat(&col));
        ess.insert(name.to_string(), effective_sample_size(&col));
    }
    Diagnostics {
        r_hat,
        ess,
        acceptance: set.acceptance.clone(),
        restarts,
    }
}

/// Runs the sampler, restarting with doubled length until R̂ passes or
/// `max_restarts` is exhausted.
fn sample<F, I>(logp: F, init: I, scale0: &[f64], cfg: &McmcConfig, names: &[&str]) -> Result<(ChainSet, Diagnostics)>
where
    F: Fn(&[f64]) -> f64 + Sync,
    I: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    let mut restart = 0;
    loop {
        let set = run_chains(&logp, &init, scale0, cfg, restart, 1 << restart);
        let diag = diagnostics(&set, names, restart);
        if diag.max_r_hat() <= R_HAT_LIMIT || restart >= cfg.max_restarts {
            return Ok((set, diag));
        }
        restart += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub beta0: f64,
    pub beta1: f64,
    pub alpha: f64,
    pub theta: f64,
}

impl Draw {
    pub fn params(&self) -> Params {
        Params {
            beta0: self.beta0,
            beta1: self.beta1,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    /// Chain-major: all draws of chain 0, then chain 1, ...
    pub draws: Vec<Draw>,
    pub chains: usize,
    pub diagnostics: Diagnostics,
    pub converged: bool,
    pub mean_service: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (s.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    Summary {
        mean: mean(xs),
        sd: if xs.len() > 1 { var(xs).sqrt() } else { 0.0 },
        q025: q(0.025),
        q975: q(0.975),
    }
}

impl PosteriorDraws {
    /// Every draw equal to `p`.
    pub fn point_mass(p: Params, mean_service: f64) -> Self {
        let d = Draw {
            beta0: p.beta0,
            beta1: p.beta1,
            alpha: p.alpha,
            theta: mean_service * (p.alpha - 1.0),
        };
        let names = ["alpha", "beta0", "beta1", "theta"];
        Self {
            draws: vec![d],
            chains: 1,
            diagnostics: Diagnostics {
                r_hat: names.iter().map(|n| (n.to_string(), 1.0)).collect(),
                ess: names.iter().map(|n| (n.to_string(), 1.0)).collect(),
                acceptance: vec![],
                restarts: 0,
            },
            converged: true,
            mean_service,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let f: fn(&Draw) -> f64 = match name {
            "beta0" => |d| d.beta0,
            "beta1" => |d| d.beta1,
            "alpha" => |d| d.alpha,
            "theta" => |d| d.theta,
            _ => return Err(Error::invalid("parameter", format!("unknown parameter {name}"))),
        };
        Ok(self.draws.iter().map(f).collect())
    }

    pub fn summary(&self) -> BTreeMap<String, Summary> {
        ["beta0", "beta1", "alpha", "theta"]
            .iter()
            .map(|n| (n.to_string(), summarize(&self.column(n).unwrap())))
            .collect()
    }

    /// Errors unless the fit converged.
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NonConvergence(format!(
                "max r_hat {:.4} > {R_HAT_LIMIT}",
                self.diagnostics.max_r_hat()
            )))
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let per_chain = self.draws.len() / self.chains.max(1);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["chain", "iteration", "beta0", "beta1", "alpha", "theta"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (i, d) in self.draws.iter().enumerate() {
            w.write_record([
                (i / per_chain.max(1)).to_string(),
                (i % per_chain.max(1)).to_string(),
                d.beta0.to_string(),
                d.beta1.to_string(),
                d.alpha.to_string(),
                d.theta.to_string(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (xm, ym) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - xm) * (a - xm)).sum();
    if sxx == 0.0 {
        return (ym, 0.0);
    }
    let slope = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum::<f64>() / sxx;
    (ym - slope * xm, slope)
}

/// A starting point matching the series level and trend under the
/// stationary approximation `E[Q(t)] ≈ λ(t)E[S] − β₁E[S]²(α−1)/(α−2)`.
fn moment_start(series: &CountSeries, priors: &PriorSpec, alpha: f64) -> (f64, f64) {
    let es = priors.mean_service;
    let t: Vec<f64> = series.points.iter().map(|p| p.0 as f64).collect();
    let n: Vec<f64> = series.points.iter().map(|p| p.1 as f64).collect();
    let (_, slope) = if t.len() > 1 { ols(&t, &n) } else { (0.0, 0.0) };
    let beta1 = (slope / es).min(0.0);
    let t_end = t.last().copied().unwrap_or(0.0);
    let shift = -beta1 * es * es * (alpha - 1.0) / (alpha - 2.0);
    let beta0 = (mean(&n) - shift) / es - beta1 * mean(&t);
    // keep the rate non-negative over the series
    let beta0 = beta0.max(-beta1 * (t_end + 1.0) + 1e-6);
    (beta0, beta1)
}

fn collect_occupancy(set: &ChainSet, mean_service: f64) -> Vec<Draw> {
    set.chains
        .iter()
        .flatten()
        .map(|x| Draw {
            beta0: x[0],
            beta1: x[1],
            alpha: x[2],
            theta: mean_service * (x[2] - 1.0),
        })
        .collect()
}

/// Fits `(β₀, β₁, α)` and returns the draws whether or not R̂ passed.
pub fn fit_detailed(series: &CountSeries, priors: &PriorSpec, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    priors.validate()?;
    if series.is_empty() {
        return Err(Error::invalid("series", "must not be empty"));
    }
    series.validate()?;
    let prior_only = cfg.prior_only;
    let logp = |x: &[f64]| {
        let p = Params::from_slice(x);
        if prior_only {
            log_prior(&p, priors)
        } else {
            log_posterior(&p, series, priors)
        }
    };
    let (lo, hi) = (priors.alpha.lo, priors.alpha.hi);
    let init = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        for _ in 0..1000 {
            let alpha = lo + (hi - lo) * (0.25 + 0.5 * rng.random::<f64>());
            let (b0, b1) = if prior_only {
                (priors.beta0.mu, priors.beta1.mu)
            } else {
                moment_start(series, priors, alpha)
            };
            let jitter = |rng: &mut ChaCha8Rng, s: f64| s * (rng.random::<f64>() - 0.5);
            let x = vec![
                b0 + jitter(rng, 0.01 * b0.abs().max(1.0)),
                (b1 + jitter(rng, 0.01 * b1.abs().max(1e-3))).min(0.0),
                alpha,
            ];
            if logp(&x).is_finite() {
                return x;
            }
        }
        vec![priors.beta0.mu, priors.beta1.mu, 0.5 * (lo + hi)]
    };
    let scale0 = if prior_only {
        [priors.beta0.sigma, priors.beta1.sigma, (hi - lo) / 4.0]
    } else {
        let n_bar = mean(&series.points.iter().map(|p| p.1 as f64).collect::<Vec<_>>()).max(1.0);
        let s = n_bar.sqrt() / priors.mean_service;
        [s.min(priors.beta0.sigma), (s / 20.0).min(priors.beta1.sigma), 0.1 * (hi - lo)]
    };
    if !prior_only && log_likelihood(&Params::from_slice(&init(&mut chain_rng(cfg.seed, 0, 0))), series, priors.mean_service) == f64::NEG_INFINITY {
        return Err(Error::Domain("no parameter value gives the series a positive likelihood".into()));
    }
    let (set, diag) = sample(logp, init, &scale0, cfg, &["beta0", "beta1", "alpha"])?;
    let converged = diag.max_r_hat() <= R_HAT_LIMIT;
    let mut diag = diag;
    let (ra, ea) = (diag.r_hat["alpha"], diag.ess["alpha"]);
    diag.r_hat.insert("theta".into(), ra);
    diag.ess.insert("theta".into(), ea);
    Ok(PosteriorDraws {
        draws: collect_occupancy(&set, priors.mean_service),
        chains: cfg.chains,
        diagnostics: diag,
        converged,
        mean_service: priors.mean_service,
        seed: cfg.seed,
    })
}

/// Like [`fit_detailed`] but fails with the R̂ values if any exceeds 1.05.
pub fn fit(series: &CountSeries, priors: &PriorSpec, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    let post = fit_detailed(series, priors, cfg)?;
    if !post.converged {
        let r_hat: Vec<String> = post.diagnostics.r_hat.iter().map(|(k, v)| format!("{k} {v:.3}")).collect();
        return Err(Error::NonConvergence(format!(
            "r_hat [{}] after {} restarts",
            r_hat.join(", "),
            post.diagnostics.restarts
        )));
    }
    Ok(post)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalDraw {
    pub beta0: f64,
    pub beta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalPosterior {
    pub draws: Vec<ArrivalDraw>,
    pub chains: usize,
    pub diagnostics: Diagnostics,
    pub converged: bool,
}

impl ArrivalPosterior {
    pub fn beta0(&self) -> Summary {
        summarize(&self.draws.iter().map(|d| d.beta0).collect::<Vec<_>>())
    }

    pub fn beta1(&self) -> Summary {
        summarize(&self.draws.iter().map(|d| d.beta1).collect::<Vec<_>>())
    }

    /// Normal priors centred on the posterior means with `scale` times the
    /// posterior standard deviations.
    pub fn prior_spec(&self, scale: f64, mean_service: f64) -> Result<PriorSpec> {
        let (b0, b1) = (self.beta0(), self.beta1());
        PriorSpec::from_arrival_summary(b0.mean, b0.sd, b1.mean, b1.sd, scale, mean_service)
    }
}

/// Posterior of `(β₀, β₁)` from monthly arrival counts, each month `t`
/// Poisson with mean `∫ₜ^{t+1} (β₀ + β₁u) du` and flat priors.
pub fn fit_arrival_counts(arrivals: &CountSeries, cfg: &McmcConfig) -> Result<ArrivalPosterior> {
    if arrivals.len() < 2 {
        return Err(Error::invalid("arrivals", "need at least 2 months"));
    }
    arrivals.validate()?;
    let mids: Vec<f64> = arrivals.points.iter().map(|p| p.0 as f64 + 0.5).collect();
    let counts: Vec<f64> = arrivals.points.iter().map(|p| p.1 as f64).collect();
    let logp = |x: &[f64]| {
        let mut total = 0.0;
        for (t, n) in mids.iter().zip(&counts) {
            let mu = x[0] + x[1] * t;
            if mu <= 0.0 {
                if mu == 0.0 && *n == 0.0 {
                    continue;
                }
                return f64::NEG_INFINITY;
            }
            total += n * mu.ln() - mu;
        }
        total
    };
    let (a, b) = ols(&mids, &counts);
    let tm = mean(&mids);
    let sxx: f64 = mids.iter().map(|t| (t - tm) * (t - tm)).sum();
    let s2 = mean(&counts).max(1.0);
    let k = mids.len() as f64;
    let scale0 = [(s2 * (1.0 / k + tm * tm / sxx)).sqrt(), (s2 / sxx).sqrt()];
    let init = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        for _ in 0..1000 {
            let x = vec![
                a + scale0[0] * (rng.random::<f64>() - 0.5),
                b + scale0[1] * (rng.random::<f64>() - 0.5),
            ];
            if logp(&x).is_finite() {
                return x;
            }
        }
        vec![mean(&counts).max(1e-3), 0.0]
    };
    let cfg = McmcConfig { prior_only: false, ..*cfg };
    let (set, diag) = sample(logp, init, &scale0, &cfg, &["beta0", "beta1"])?;
    let converged = diag.max_r_hat() <= R_HAT_LIMIT;
    if !converged {
        return Err(Error::NonConvergence(format!("max r_hat {:.3}", diag.max_r_hat())));
    }
    Ok(ArrivalPosterior {
        draws: set
            .chains
            .iter()
            .flatten()
            .map(|x| ArrivalDraw { beta0: x[0], beta1: x[1] })
            .collect(),
        chains: cfg.chains,
        diagnostics: diag,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::posterior::{simulate_counts, NormalPrior};
    use crate::inference::series::{Provenance, YearMonth};
    use rand_distr::{Distribution, Poisson};

    fn origin() -> YearMonth {
        YearMonth::new(2015, 3).unwrap()
    }

    #[test]
    fn r_hat_detects_disagreeing_chains() {
        let a: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64) / 101.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 5.0).collect();
        assert!(split_r_hat(&[a.clone(), a.clone()]) < 1.05);
        assert!(split_r_hat(&[a, b]) > 2.0);
    }

    #[test]
    fn ess_of_independent_draws_is_near_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let ess = effective_sample_size(&chains);
        assert!(ess > 3000.0 && ess < 5500.0, "{ess}");
        // AR(1) with phi = 0.9 has ESS ≈ N (1 − φ)/(1 + φ)
        let mut x = 0.0;
        let ar: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                (0..20000)
                    .map(|_| {
                        x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = effective_sample_size(&ar);
        let expect = 40000.0 * 0.1 / 1.9;
        assert!((ess / expect - 1.0).abs() < 0.3, "{ess} {expect}");
    }

    #[test]
    fn prior_only_run_recovers_prior_moments() {
        let priors = PriorSpec::new(
            NormalPrior { mu: 1000.0, sigma: 50.0 },
            NormalPrior { mu: -5.0, sigma: 1.0 },
            5.22,
        )
        .unwrap();
        let series = CountSeries::from_counts("x", origin(), &[1, 2, 3]);
        let cfg = McmcConfig {
            prior_only: true,
            chains: 2,
            iterations: 40_000,
            seed: 5,
            ..McmcConfig::default()
        };
        let post = fit(&series, &priors, &cfg).unwrap();
        let s = post.summary();
        let ess = &post.diagnostics.ess;
        let check = |name: &str, mu: f64, sd: f64| {
            let se = sd / ess[name].sqrt();
            assert!((s[name].mean - mu).abs() < 4.0 * se, "{name} {} {mu}", s[name].mean);
            assert!((s[name].sd / sd - 1.0).abs() < 0.1, "{name} sd {}", s[name].sd);
        };
        check("beta0", 1000.0, 50.0);
        check("beta1", -5.0, 1.0);
        check("alpha", 6.25, 7.5 / 12f64.sqrt());
        assert!(post.draws.iter().all(|d| (2.5..=10.0).contains(&d.alpha)));
        assert!(post.draws.iter().all(|d| (d.theta - 5.22 * (d.alpha - 1.0)).abs() < 1e-12));
    }

    #[test]
    fn fit_concentrates_near_truth() {
        let truth = Params { beta0: 1000.0, beta1: -5.0, alpha: 4.0 };
        let series = simulate_counts(&truth, 5.22, 48, origin(), 11).unwrap();
        let priors = PriorSpec::new(
            NormalPrior { mu: 1000.0, sigma: 100.0 },
            NormalPrior { mu: -5.0, sigma: 3.0 },
            5.22,
        )
        .unwrap();
        let post = fit(&series, &priors, &McmcConfig::with_iterations(4000, 3)).unwrap();
        let s = post.summary();
        assert!(s["beta0"].q025 < 1000.0 && 1000.0 < s["beta0"].q975, "{:?}", s["beta0"]);
        assert!(s["beta1"].q025 < -5.0 && -5.0 < s["beta1"].q975, "{:?}", s["beta1"]);
        assert!(post.diagnostics.acceptance.iter().all(|&a| a > 0.1 && a < 0.5));
        assert_eq!(post.len(), 2 * 2000);
    }

    #[test]
    fn fit_is_deterministic_for_a_seed() {
        let truth = Params { beta0: 1000.0, beta1: -5.0, alpha: 4.0 };
        let series = simulate_counts(&truth, 5.22, 24, origin(), 2).unwrap();
        let priors = PriorSpec::new(
            NormalPrior { mu: 1000.0, sigma: 50.0 },
            NormalPrior { mu: -5.0, sigma: 1.0 },
            5.22,
        )
        .unwrap();
        let cfg = McmcConfig::with_iterations(1000, 9);
        assert_eq!(fit_detailed(&series, &priors, &cfg).unwrap(), fit_detailed(&series, &priors, &cfg).unwrap());
    }

    #[test]
    fn empty_series_is_rejected() {
        let n = NormalPrior { mu: 0.0, sigma: 1.0 };
        let priors = PriorSpec::new(n, n, 3.0).unwrap();
        let empty = CountSeries::new("x", origin(), vec![], Provenance::Observed).unwrap();
        assert!(fit(&empty, &priors, &McmcConfig::default()).is_err());
    }

    #[test]
    fn constant_arrivals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let po = Poisson::new(120.0).unwrap();
        let counts: Vec<u64> = (0..48).map(|_| po.sample(&mut rng) as u64).collect();
        let s = CountSeries::from_counts("a", origin(), &counts);
        let post = fit_arrival_counts(&s, &McmcConfig::with_iterations(6000, 1)).unwrap();
        let (b0, b1) = (post.beta0(), post.beta1());
        assert!((b0.mean - 120.0).abs() < 3.0 * b0.sd + 1.0, "{b0:?}");
        assert!(b1.q025 < 0.0 && b1.q975 > 0.0, "{b1:?}");
        let prior = post.prior_spec(10.0, 5.22).unwrap();
        assert!((prior.beta0.sigma - 10.0 * b0.sd).abs() < 1e-9);
        assert!((prior.beta1.mu - b1.mean).abs() < 1e-12);
    }

    #[test]
    fn draws_csv_has_one_row_per_draw() {
        let p = PosteriorDraws::point_mass(Params { beta0: 1.0, beta1: 0.0, alpha: 3.0 }, 2.0);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("chain,iteration,beta0,beta1,alpha,theta"));
    }
}
