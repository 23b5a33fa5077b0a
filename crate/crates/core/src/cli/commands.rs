//! Subcommand arguments and their implementations.
//!
//! Every argument struct doubles as the JSON schema of `--config`: values
//! given on the command line override those read from the file.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::arrivals::ArrivalRate;
use crate::dist::{Moment, ServiceDistribution};
use crate::error::{Error, Result};
use crate::horizon::{
    congestion_probability, recovery_with_intervention, Intervention, LastDepartureLaw, RecoveryProblem,
    RecoveryResult,
};
use crate::inference::mcmc::{fit, fit_arrival_counts, summarize, McmcConfig, PosteriorDraws, Summary};
use crate::inference::posterior::{Params, PriorSpec};
use crate::inference::predict::{predict_from, predict_short_term, Mode, PredictionSeries, Scenario};
use crate::inference::series::{read_counts_csv, read_quarterly_csv, write_counts_csv, CountSeries};
use crate::inference::synth::synthesize_monthly;
use crate::observed::{self, ClassObservation};
use crate::sim::{self, InitialCondition, InitialPreset, SimConfig};

use super::manifest::ENGINE_VERSION;
use super::Format;

/// One output file, named relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn json_artifact<T: Serialize>(name: &str, value: &T) -> Result<Artifact> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(Artifact { name: name.into(), bytes })
}

fn csv_artifact(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(Artifact { name: name.into(), bytes })
}

fn required<T: Clone>(v: &Option<T>, name: &'static str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(format!("missing required setting `{name}`")))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        column: e.column() as u64,
        message: format!("{}: {e}", path.display()),
    })
}

/// Picks `class` from a counts file, or its only class.
pub fn load_series(path: &Path, class: Option<&str>) -> Result<CountSeries> {
    let all = read_counts_csv(open(path)?)?;
    match class {
        Some(c) => all
            .into_iter()
            .find(|s| s.class_id == c)
            .ok_or_else(|| Error::Config(format!("class `{c}` not found in {}", path.display()))),
        None if all.len() == 1 => Ok(all.into_iter().next().expect("one class")),
        None => Err(Error::Config(format!(
            "{} holds {} classes; choose one with --class",
            path.display(),
            all.len()
        ))),
    }
}

/// Parses `"1-8"`, `"0,3,6"` or mixtures such as `"0,2-4"`.
pub fn parse_list_u32(s: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::Config(format!("cannot read `{part}` as a month or month range"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty horizon list".into()));
    }
    Ok(out)
}

pub fn parse_list_f64(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| Error::Config(format!("cannot read `{p}` as a number"))))
        .collect()
}

fn pareto_from(mean: f64, alpha: Option<f64>, scv: Option<f64>) -> Result<ServiceDistribution> {
    match (alpha, scv) {
        (Some(a), None) => ServiceDistribution::pareto_with_mean(mean, a),
        (None, Some(c)) => ServiceDistribution::pareto_with_mean_scv(mean, c),
        (None, None) => Err(Error::Config("give the Pareto shape with --alpha or --scv".into())),
        (Some(_), Some(_)) => Err(Error::Config("--alpha and --scv are mutually exclusive".into())),
    }
}

// ---------------------------------------------------------------- synthesize

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthesizeArgs {
    /// Quarterly counts CSV with header `quarter,class_id,count`.
    #[arg(long)]
    pub quarterly: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<String>,
}

fn synthesize(a: &SynthesizeArgs, seed: u64, format: Format) -> Result<Vec<Artifact>> {
    let path = required(&a.quarterly, "quarterly")?;
    let all = read_quarterly_csv(open(&path)?)?;
    let q = match &a.class {
        Some(c) => all
            .into_iter()
            .find(|q| &q.class_id == c)
            .ok_or_else(|| Error::Config(format!("class `{c}` not found")))?,
        None if all.len() == 1 => all.into_iter().next().expect("one class"),
        None => return Err(Error::Config("several classes present; choose one with --class".into())),
    };
    let s = synthesize_monthly(&q, seed)?;
    match format {
        Format::Json => Ok(vec![json_artifact("synthesize.json", &s)?]),
        Format::Csv => {
            let mut bytes = Vec::new();
            write_counts_csv(std::slice::from_ref(&s.series), &mut bytes)?;
            Ok(vec![Artifact { name: "counts.csv".into(), bytes }])
        }
    }
}

// ----------------------------------------------------------------------- fit

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Monthly occupancy counts CSV (`month,class_id,count`).
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<String>,
    /// Priors as JSON.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    /// Inline priors (config file only).
    #[arg(skip)]
    pub prior: Option<PriorSpec>,
    /// Monthly arrival counts CSV; priors are then centred on the arrival
    /// posterior with `--prior-scale` times its standard deviations.
    #[arg(long)]
    pub arrivals: Option<PathBuf>,
    #[arg(long)]
    pub prior_scale: Option<f64>,
    /// Mean service time in months; fixes `θ = E[S](α − 1)`.
    #[arg(long)]
    pub mean_service: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub prior_only: Option<bool>,
}

/// Everything `predict` and `scenario` need from a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub engine_version: String,
    pub seed: u64,
    pub class_id: String,
    pub priors: PriorSpec,
    pub mcmc: McmcConfig,
    pub warnings: Vec<String>,
    pub summary: BTreeMap<String, Summary>,
    pub history: CountSeries,
    pub posterior: PosteriorDraws,
}

impl FitArgs {
    fn mcmc(&self, seed: u64) -> McmcConfig {
        let d = McmcConfig::default();
        McmcConfig {
            chains: self.chains.unwrap_or(d.chains),
            iterations: self.iterations.unwrap_or(d.iterations),
            warmup: self.warmup,
            seed,
            prior_only: self.prior_only.unwrap_or(false),
            ..d
        }
    }

    fn priors(&self, seed: u64) -> Result<PriorSpec> {
        let sources = [self.priors.is_some(), self.prior.is_some(), self.arrivals.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config("give exactly one of --priors, an inline `prior`, or --arrivals".into()));
        }
        let mut chosen = if let Some(p) = &self.priors {
            read_json::<PriorSpec>(p)?
        } else if let Some(p) = self.prior {
            p
        } else {
            let path = self.arrivals.as_ref().expect("checked");
            let arrivals = load_series(path, self.class.as_deref())?;
            let post = fit_arrival_counts(&arrivals, &self.mcmc(seed))?;
            post.prior_spec(self.prior_scale.unwrap_or(10.0), required(&self.mean_service, "mean_service")?)?
        };
        if let Some(es) = self.mean_service {
            chosen.mean_service = es;
        }
        chosen.validate()?;
        Ok(chosen)
    }
}

fn fit_cmd(a: &FitArgs, seed: u64, format: Format) -> Result<Vec<Artifact>> {
    let series = load_series(&required(&a.series, "series")?, a.class.as_deref())?;
    let priors = a.priors(seed)?;
    let mcmc = a.mcmc(seed);
    let posterior = fit(&series, &priors, &mcmc)?;
    let report = FitReport {
        engine_version: ENGINE_VERSION.into(),
        seed,
        class_id: series.class_id.clone(),
        warnings: priors.warnings(),
        priors,
        mcmc,
        summary: posterior.summary(),
        history: series,
        posterior,
    };
    let mut out = vec![json_artifact("fit.json", &report)?];
    if format == Format::Csv {
        let mut bytes = Vec::new();
        report.posterior.write_csv(&mut bytes)?;
        out.push(Artifact { name: "draws.csv".into(), bytes });
    }
    Ok(out)
}

// ------------------------------------------------------------------- predict

/// Where the posterior comes from and which observation predictions start
/// from.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct PosteriorSource {
    /// `fit.json` written by `fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Point posterior instead of a fit: `β₀`.
    #[arg(long, allow_hyphen_values = true)]
    pub beta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mean_service: Option<f64>,
    /// Month index of the conditioning observation (default: last month of
    /// the fitted series).
    #[arg(long)]
    pub tau: Option<i64>,
    /// Observed count at `tau`.
    #[arg(long)]
    pub n: Option<u64>,
    /// Horizons in months, e.g. `1-8` or `0,6,12`.
    #[arg(long)]
    pub horizons: Option<String>,
}

struct Loaded {
    draws: PosteriorDraws,
    report: Option<FitReport>,
    tau: i64,
    n: u64,
    horizons: Vec<u32>,
}

impl PosteriorSource {
    fn load(&self) -> Result<Loaded> {
        let horizons = parse_list_u32(self.horizons.as_deref().unwrap_or("1-8"))?;
        let point = [self.beta0, self.beta1, self.alpha, self.mean_service];
        match (&self.fit, point.iter().any(Option::is_some)) {
            (Some(path), false) => {
                let report: FitReport = read_json(path)?;
                let (t_last, n_last) = report
                    .history
                    .last()
                    .ok_or_else(|| Error::Config("fit has an empty history".into()))?;
                Ok(Loaded {
                    draws: report.posterior.clone(),
                    tau: self.tau.unwrap_or(t_last),
                    n: match self.tau {
                        Some(t) if self.n.is_none() => report
                            .history
                            .count_at(t)
                            .ok_or_else(|| Error::Config(format!("no observation at month {t}; give --n")))?,
                        _ => self.n.unwrap_or(n_last),
                    },
                    report: Some(report),
                    horizons,
                })
            }
            (None, true) => {
                let p = Params {
                    beta0: required(&self.beta0, "beta0")?,
                    beta1: required(&self.beta1, "beta1")?,
                    alpha: required(&self.alpha, "alpha")?,
                };
                Ok(Loaded {
                    draws: PosteriorDraws::point_mass(p, required(&self.mean_service, "mean_service")?),
                    report: None,
                    tau: required(&self.tau, "tau")?,
                    n: required(&self.n, "n")?,
                    horizons,
                })
            }
            (Some(_), true) => Err(Error::Config("give either --fit or a point posterior, not both".into())),
            (None, false) => Err(Error::Config("give --fit or a point posterior (--beta0 --beta1 --alpha --mean-service)".into())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: PosteriorSource,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Realized months for short-term mode (`month,class_id,count`).
    #[arg(long)]
    pub future: Option<PathBuf>,
}

fn prediction_artifacts(stem: &str, p: &PredictionSeries, format: Format) -> Result<Artifact> {
    match format {
        Format::Json => json_artifact(&format!("{stem}.json"), p),
        Format::Csv => {
            let mut bytes = Vec::new();
            p.write_csv(&mut bytes)?;
            Ok(Artifact { name: format!("{stem}.csv"), bytes })
        }
    }
}

fn predict_cmd(a: &PredictArgs, seed: u64, format: Format) -> Result<Vec<Artifact>> {
    let l = a.source.load()?;
    let pred = match a.mode.unwrap_or(Mode::LongTerm) {
        Mode::LongTerm => predict_from(&l.draws, l.tau, l.n, &l.horizons, &Scenario::Baseline, seed)?,
        Mode::ShortTerm => {
            let report = l
                .report
                .as_ref()
                .ok_or_else(|| Error::Config("short-term mode refits and needs --fit".into()))?;
            let future = load_series(&required(&a.future, "future")?, Some(&report.class_id))?;
            let history = CountSeries {
                points: report.history.points.iter().copied().filter(|p| p.0 <= l.tau).collect(),
                ..report.history.clone()
            };
            let cfg = McmcConfig { seed, ..report.mcmc };
            predict_short_term(&history, &future.rebase(history.origin).after(l.tau), &report.priors, &cfg)?
        }
    };
    Ok(vec![prediction_artifacts("predict", &pred, format)?])
}

// ------------------------------------------------------------------ scenario

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct ScenarioArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: PosteriorSource,
    /// New mean service time for arrivals after `tau`.
    #[arg(long)]
    pub switch_mean: Option<f64>,
    /// Factor applied to the arrival rate after `tau`.
    #[arg(long)]
    pub lambda_scale: Option<f64>,
    /// Months without arrivals after `tau`.
    #[arg(long)]
    pub pause: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub baseline: PredictionSeries,
    pub scenario: PredictionSeries,
}

fn scenario_cmd(a: &ScenarioArgs, seed: u64, format: Format) -> Result<Vec<Artifact>> {
    let scenario = match (a.switch_mean, a.lambda_scale, a.pause) {
        (Some(m), None, None) => Scenario::ServiceSwitch { mean_service_new: m },
        (None, Some(f), None) => Scenario::LambdaScale { factor: f },
        (None, None, Some(p)) => Scenario::Pause { months: p },
        _ => return Err(Error::Config("give exactly one of --switch-mean, --lambda-scale, --pause".into())),
    };
    let l = a.source.load()?;
    let baseline = predict_from(&l.draws, l.tau, l.n, &l.horizons, &Scenario::Baseline, seed)?;
    let alt = predict_from(&l.draws, l.tau, l.n, &l.horizons, &scenario, seed)?;
    match format {
        Format::Json => Ok(vec![json_artifact("scenario.json", &ScenarioReport { baseline, scenario: alt })?]),
        Format::Csv => Ok(vec![
            prediction_artifacts("baseline", &baseline, format)?,
            prediction_artifacts("scenario", &alt, format)?,
        ]),
    }
}

// ------------------------------------------------------------------- recover

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct RecoverArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mean_service: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub scv: Option<f64>,
    /// Congested occupancy.
    #[arg(long)]
    pub n: Option<f64>,
    /// Recovery level (default `⌈ν + 1⌉`).
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub scale_lambda: Option<f64>,
    /// Pause arrivals until `k`, then resume until this level.
    #[arg(long)]
    pub pause_resume: Option<f64>,
    /// Points on the mean recovery path.
    #[arg(long)]
    pub path_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverReport {
    pub nu: f64,
    /// `P[N ≥ n]` in steady state.
    pub congestion_probability: f64,
    pub baseline: RecoveryResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervention: Option<RecoveryResult>,
    pub mean_path: Vec<PathPoint>,
}

/// Recovery times, with and without the requested intervention, and the
/// mean path from `n`.
pub fn recover_report(a: &RecoverArgs) -> Result<RecoverReport> {
    let dist = pareto_from(required(&a.mean_service, "mean_service")?, a.alpha, a.scv)?;
    let p = RecoveryProblem::new(required(&a.lambda, "lambda")?, dist, required(&a.n, "n")?, a.k)?;
    let intervention = match (a.scale_lambda, a.pause_resume) {
        (None, None) => None,
        (Some(f), None) => Some(Intervention::ScaleLambda { factor: f }),
        (None, Some(j)) => Some(Intervention::PauseThenResume { resume_level: j }),
        _ => return Err(Error::Config("--scale-lambda and --pause-resume are mutually exclusive".into())),
    };
    let baseline = recovery_with_intervention(&p, Intervention::None)?;
    let alt = intervention.map(|i| recovery_with_intervention(&p, i)).transpose()?;
    let points = a.path_points.unwrap_or(50).max(2);
    let t_max = 2.0 * baseline.beta_months;
    let mean_path = (0..points)
        .map(|i| {
            let t = t_max * i as f64 / (points - 1) as f64;
            Ok(PathPoint { t, mean: p.mean_path(t)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoverReport {
        nu: p.nu(),
        congestion_probability: congestion_probability(p.nu(), p.n.ceil() as u64),
        baseline,
        intervention: alt,
        mean_path,
    })
}

fn recover_cmd(a: &RecoverArgs, format: Format) -> Result<Vec<Artifact>> {
    let report = recover_report(a)?;
    match format {
        Format::Json => Ok(vec![json_artifact("recover.json", &report)?]),
        Format::Csv => Ok(vec![csv_artifact(
            "recover.csv",
            &["t", "mean"],
            report.mean_path.iter().map(|q| vec![q.t.to_string(), q.mean.to_string()]).collect(),
        )?]),
    }
}

// ------------------------------------------------------------------- lastdep

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct LastdepArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mean_service: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub scv: Option<f64>,
    /// Probabilities, e.g. `0.5,0.9,0.99`.
    #[arg(long)]
    pub quantiles: Option<String>,
    /// Points in the cdf table.
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub p: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastdepReport {
    pub nu: f64,
    pub mean: Moment,
    pub quantiles: Vec<QuantilePoint>,
    pub cdf: Vec<CdfPoint>,
}

fn lastdep_cmd(a: &LastdepArgs, format: Format) -> Result<Vec<Artifact>> {
    let dist = pareto_from(required(&a.mean_service, "mean_service")?, a.alpha, a.scv)?;
    let law = LastDepartureLaw::stationary(required(&a.lambda, "lambda")?, &dist)?;
    let probs = parse_list_f64(a.quantiles.as_deref().unwrap_or("0.5,0.9,0.99"))?;
    let quantiles = probs
        .iter()
        .map(|&p| Ok(QuantilePoint { p, x: law.quantile(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let top = law.quantile(0.99)?;
    let points = a.grid_points.unwrap_or(100).max(2);
    let cdf = (0..points)
        .map(|i| {
            let x = top * i as f64 / (points - 1) as f64;
            Ok(CdfPoint { x, cdf: law.cdf(x)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = LastdepReport { nu: law.nu(), mean: law.mean()?, quantiles, cdf };
    match format {
        Format::Json => Ok(vec![json_artifact("lastdep.json", &report)?]),
        Format::Csv => Ok(vec![csv_artifact(
            "lastdep.csv",
            &["x", "cdf"],
            report.cdf.iter().map(|c| vec![c.x.to_string(), c.cdf.to_string()]).collect(),
        )?]),
    }
}

// ------------------------------------------------------------------ simulate

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Full simulation setup (config file only); the flags below build a
    /// constant-rate Pareto setup instead.
    #[arg(skip)]
    pub sim: Option<SimConfig>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mean_service: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub scv: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Initial cohort size; arrivals have been running since −∞.
    #[arg(long)]
    pub n0: Option<u64>,
    #[arg(long)]
    pub replications: Option<u64>,
    /// Probe times, e.g. `1,3,10`.
    #[arg(long)]
    pub probes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub config: SimConfig,
    pub probes: Vec<ProbeSummary>,
    pub mean_last_departure: f64,
}

/// Mean occupancy at `t` implied by the configuration, when available.
fn analytic_mean(cfg: &SimConfig, t: f64) -> Option<f64> {
    if cfg.switch.is_some() {
        return None;
    }
    let (start, delta) = (cfg.start, t - cfg.start);
    let arrivals = observed::m_check(&cfg.rate, &cfg.dist, start, delta).ok()?;
    let cohort = match &cfg.initial {
        InitialCondition::Preset(InitialPreset::Empty) => 0.0,
        InitialCondition::Preset(InitialPreset::SteadyStatePoisson) => {
            observed::nu_tau(&cfg.rate, &cfg.dist, start).ok()?
                * observed::remaining_survival(&cfg.rate, &cfg.dist, start, delta).ok()?
        }
        InitialCondition::Cohort { n, elapsed: None } => {
            *n as f64 * observed::remaining_survival(&cfg.rate, &cfg.dist, start, delta).ok()?
        }
        InitialCondition::Cohort { n, elapsed: Some(e) } => {
            let class = ClassObservation { class_id: String::new(), n: *n, elapsed: Some(e.clone()) };
            return observed::elapsed_informed_prediction(&class, start, &cfg.rate, &cfg.dist, delta)
                .ok()
                .map(|m| m.mean);
        }
    };
    Some(cohort + arrivals)
}

fn simulate_cmd(a: &SimulateArgs, seed: u64, format: Format) -> Result<Vec<Artifact>> {
    let mut cfg = match &a.sim {
        Some(c) => c.clone(),
        None => {
            let dist = pareto_from(required(&a.mean_service, "mean_service")?, a.alpha, a.scv)?;
            let rate = ArrivalRate::constant(required(&a.lambda, "lambda")?)?;
            let cfg = SimConfig::new(rate, dist, required(&a.horizon, "horizon")?, 1000, seed);
            match a.n0 {
                Some(n) => cfg.with_initial(InitialCondition::Cohort { n, elapsed: None }),
                None => cfg.with_initial(InitialCondition::Preset(InitialPreset::SteadyStatePoisson)),
            }
        }
    };
    cfg.seed = seed;
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    let probes = match &a.probes {
        Some(p) => parse_list_f64(p)?,
        None => (0..=10).map(|i| cfg.start + cfg.horizon * i as f64 / 10.0).collect(),
    };
    let out = sim::run(&cfg, &probes)?;
    let summaries = probes
        .iter()
        .map(|&t| {
            let xs: Vec<f64> = out.occupancies_at(t)?.iter().map(|&v| v as f64).collect();
            let (mean, variance, se) = crate::stats::mean_var_se(&xs);
            Ok(ProbeSummary { t, mean, se, variance, analytic_mean: analytic_mean(&cfg, t) })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = out.last_departures();
    let report = SimulateReport {
        config: cfg,
        probes: summaries,
        mean_last_departure: summarize(&last).mean,
    };
    match format {
        Format::Json => Ok(vec![json_artifact("simulate.json", &report)?]),
        Format::Csv => {
            let mut bytes = Vec::new();
            out.write_occupancy_csv(&mut bytes)?;
            Ok(vec![
                csv_artifact(
                    "simulate.csv",
                    &["t", "mean", "se", "variance", "analytic_mean"],
                    report
                        .probes
                        .iter()
                        .map(|p| {
                            vec![
                                p.t.to_string(),
                                p.mean.to_string(),
                                p.se.to_string(),
                                p.variance.to_string(),
                                p.analytic_mean.map(|v| v.to_string()).unwrap_or_default(),
                            ]
                        })
                        .collect(),
                )?,
                Artifact { name: "occupancy.csv".into(), bytes },
            ])
        }
    }
}

// ------------------------------------------------------------------- dispatch

/// A fully resolved, replayable command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "snake_case")]
pub enum Job {
    Synthesize(SynthesizeArgs),
    Fit(FitArgs),
    Predict(PredictArgs),
    Scenario(ScenarioArgs),
    Recover(RecoverArgs),
    Lastdep(LastdepArgs),
    Simulate(SimulateArgs),
}

fn abs(p: &mut Option<PathBuf>, inputs: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(path) = p {
        let canonical = path
            .canonicalize()
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        inputs.push(canonical.clone());
        *path = canonical;
    }
    Ok(())
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Synthesize(_) => "synthesize",
            Job::Fit(_) => "fit",
            Job::Predict(_) => "predict",
            Job::Scenario(_) => "scenario",
            Job::Recover(_) => "recover",
            Job::Lastdep(_) => "lastdep",
            Job::Simulate(_) => "simulate",
        }
    }

    /// Makes input paths absolute and returns them.
    pub fn resolve_inputs(&mut self) -> Result<Vec<PathBuf>> {
        let mut inputs = Vec::new();
        match self {
            Job::Synthesize(a) => abs(&mut a.quarterly, &mut inputs)?,
            Job::Fit(a) => {
                abs(&mut a.series, &mut inputs)?;
                abs(&mut a.priors, &mut inputs)?;
                abs(&mut a.arrivals, &mut inputs)?;
            }
            Job::Predict(a) => {
                abs(&mut a.source.fit, &mut inputs)?;
                abs(&mut a.future, &mut inputs)?;
            }
            Job::Scenario(a) => abs(&mut a.source.fit, &mut inputs)?,
            Job::Recover(_) | Job::Lastdep(_) | Job::Simulate(_) => {}
        }
        Ok(inputs)
    }

    pub fn execute(&self, seed: u64, format: Format) -> Result<Vec<Artifact>> {
        match self {
            Job::Synthesize(a) => synthesize(a, seed, format),
            Job::Fit(a) => fit_cmd(a, seed, format),
            Job::Predict(a) => predict_cmd(a, seed, format),
            Job::Scenario(a) => scenario_cmd(a, seed, format),
            Job::Recover(a) => recover_cmd(a, format),
            Job::Lastdep(a) => lastdep_cmd(a, format),
            Job::Simulate(a) => simulate_cmd(a, seed, format),
        }
    }
}
