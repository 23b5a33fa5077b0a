//! Request payloads and handlers.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use occq::cli::commands::{recover_report, RecoverArgs, RecoverReport};
use occq::cli::manifest::ENGINE_VERSION;
use occq::inference::mcmc::{fit_detailed, Diagnostics, McmcConfig, PosteriorDraws, Summary};
use occq::inference::posterior::{Params, PriorSpec};
use occq::inference::predict::{predict_from, predict_short_term, PredictionSeries, Scenario};
use occq::inference::series::{read_counts_csv, read_quarterly_csv, CountSeries, Provenance};
use occq::inference::synthesize_monthly;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::config::ServiceConfig;
use crate::error::{ApiError, ApiResult};
use crate::store::{FitOutcome, FitState, Session, SessionStore, StartFit};

pub struct AppState {
    pub config: ServiceConfig,
    pub store: SessionStore,
    pub workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            store: SessionStore::new(config.capacity),
            workers: Arc::new(Semaphore::new(config.workers)),
            config,
        }
    }
}

pub type Shared = Arc<AppState>;

/// Every successful body: engine version and seed, then the payload.
#[derive(Debug, Serialize)]
pub struct Envelope<T> {
    pub engine_version: &'static str,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub body: T,
}

fn reply<T: Serialize>(seed: Option<u64>, body: T) -> Json<Envelope<T>> {
    Json(Envelope { engine_version: ENGINE_VERSION, seed, body })
}

/// JSON body whose rejections become 400 responses.
pub struct Payload<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Payload<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Payload(v)),
            Err(rejection) => Err(ApiError::bad_request(rejection.body_text())),
        }
    }
}

fn choose_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| u64::from(rand::random::<u32>()))
}

/// Runs blocking engine work on the bounded worker pool.
async fn compute<T, F>(state: &AppState, seed: Option<u64>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> occq::Result<T> + Send + 'static,
{
    let tag = |e: ApiError| match seed {
        Some(s) => e.with_seed(s),
        None => e,
    };
    let wait = Duration::from_secs(state.config.queue_timeout_secs);
    let permit = match tokio::time::timeout(wait, state.workers.clone().acquire_owned()).await {
        Ok(Ok(p)) => p,
        _ => return Err(tag(ApiError::busy("all workers are busy"))),
    };
    let job = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        f()
    });
    let budget = Duration::from_secs(state.config.request_budget_secs);
    match tokio::time::timeout(budget, job).await {
        Ok(Ok(r)) => r.map_err(|e| tag(e.into())),
        Ok(Err(e)) => Err(tag(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
            "report this request",
        ))),
        Err(_) => Err(tag(ApiError::busy(format!(
            "computation exceeded the {} s request budget",
            state.config.request_budget_secs
        )))),
    }
}

// ----------------------------------------------------------------- health

#[derive(Debug, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub sessions: usize,
    pub workers: usize,
    pub idle_workers: usize,
}

pub async fn health(State(s): State<Shared>) -> impl IntoResponse {
    reply(
        None,
        Health {
            status: "ok",
            sessions: s.store.len(),
            workers: s.config.workers,
            idle_workers: s.workers.available_permits(),
        },
    )
}

// ----------------------------------------------------------------- series

/// Upload monthly counts, or quarterly totals to be spread over months.
#[derive(Debug, Clone, Default, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SeriesRequest {
    /// CSV with header `month,class_id,count`.
    pub csv: Option<String>,
    /// CSV with header `quarter,class_id,count`.
    pub quarterly_csv: Option<String>,
    /// Class to keep when the CSV holds several.
    pub class_id: Option<String>,
    /// Seed for monthly synthesis from quarterly totals.
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct SeriesResponse {
    pub session_id: String,
    pub series: CountSeries,
}

fn pick_class<T>(all: Vec<T>, class: Option<&str>, id: impl Fn(&T) -> &str) -> occq::Result<T> {
    match class {
        Some(c) => all
            .into_iter()
            .find(|s| id(s) == c)
            .ok_or_else(|| occq::Error::Config(format!("class `{c}` not found"))),
        None if all.len() == 1 => Ok(all.into_iter().next().expect("one class")),
        None if all.is_empty() => Err(occq::Error::Config("no rows".into())),
        None => Err(occq::Error::Config("several classes present; set class_id".into())),
    }
}

pub async fn series(State(s): State<Shared>, Payload(req): Payload<SeriesRequest>) -> ApiResult<Response> {
    let (series, seed) = match (&req.csv, &req.quarterly_csv) {
        (Some(csv), None) => {
            let all = read_counts_csv(csv.as_bytes())?;
            (pick_class(all, req.class_id.as_deref(), |s| &s.class_id)?, None)
        }
        (None, Some(csv)) => {
            let all = read_quarterly_csv(csv.as_bytes())?;
            let q = pick_class(all, req.class_id.as_deref(), |s| &s.class_id)?;
            let seed = choose_seed(req.seed);
            let synth = compute(&s, Some(seed), move || synthesize_monthly(&q, seed)).await?;
            (synth.series, Some(seed))
        }
        _ => return Err(ApiError::bad_request("give exactly one of `csv` or `quarterly_csv`")),
    };
    if series.is_empty() {
        return Err(ApiError::bad_request("the series has no observations"));
    }
    let session = Session { id: uuid::Uuid::new_v4().to_string(), series: Arc::new(series), fit: None };
    let stored = s
        .store
        .insert(session)
        .map_err(|_| ApiError::busy("session store is full of running fits"))?;
    let body = SeriesResponse { session_id: stored.id.clone(), series: (*stored.series).clone() };
    Ok((StatusCode::CREATED, reply(seed, body)).into_response())
}

// -------------------------------------------------------------------- fit

/// Start a posterior fit for an uploaded series.
#[derive(Debug, Clone, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub session_id: String,
    /// `{beta0: {mu, sigma}, beta1: {mu, sigma}, alpha: {lo, hi}, mean_service}`.
    #[schemars(with = "serde_json::Value")]
    pub priors: PriorSpec,
    pub iterations: Option<usize>,
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub prior_only: Option<bool>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct FitHandle {
    pub session_id: String,
    pub status: &'static str,
    pub warnings: Vec<String>,
}

pub async fn fit(State(s): State<Shared>, Payload(req): Payload<FitRequest>) -> ApiResult<Response> {
    let seed = choose_seed(req.seed);
    let tag = |e: ApiError| e.with_seed(seed);
    let session = s.store.get(&req.session_id).ok_or_else(|| tag(ApiError::unknown_session(&req.session_id)))?;
    req.priors.validate().map_err(|e| tag(e.into()))?;
    let d = McmcConfig::default();
    let mcmc = McmcConfig {
        chains: req.chains.unwrap_or(d.chains),
        iterations: req.iterations.unwrap_or(d.iterations),
        warmup: req.warmup,
        seed,
        prior_only: req.prior_only.unwrap_or(false),
        ..d
    };
    mcmc.validate().map_err(|e| tag(e.into()))?;
    let permit = s
        .workers
        .clone()
        .try_acquire_owned()
        .map_err(|_| tag(ApiError::busy("all workers are busy")))?;
    match s.store.start_fit(&session.id, seed) {
        StartFit::Started => {}
        StartFit::Busy => return Err(tag(ApiError::conflict("a fit is already running for this session"))),
        StartFit::Missing => return Err(tag(ApiError::unknown_session(&session.id))),
    }
    let warnings = req.priors.warnings();
    let state = s.clone();
    let priors = req.priors;
    let id = session.id.clone();
    let job_warnings = warnings.clone();
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let next = match fit_detailed(&session.series, &priors, &mcmc) {
            Ok(posterior) => FitState::Done(Arc::new(FitOutcome { priors, mcmc, warnings: job_warnings, posterior })),
            Err(e) => FitState::Failed { seed, error: ApiError::from(e).detail },
        };
        state.store.set_fit(&id, next);
    });
    let body = FitHandle { session_id: req.session_id, status: "running", warnings };
    Ok((StatusCode::ACCEPTED, reply(Some(seed), body)).into_response())
}

#[derive(Debug, Serialize)]
pub struct FitStatus {
    pub session_id: String,
    /// `running`, `converged`, `not_converged` or `failed`.
    pub status: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<BTreeMap<String, Summary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<crate::error::ErrorDetail>,
}

fn fit_state(s: &AppState, id: &str) -> ApiResult<(Arc<Session>, FitState)> {
    let session = s.store.get(id).ok_or_else(|| ApiError::unknown_session(id))?;
    let state = session.fit.clone().ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "no_fit", format!("session `{id}` has no fit"), "start one with POST /fit")
    })?;
    Ok((session, state))
}

pub async fn fit_status(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let (_, state) = fit_state(&s, &id)?;
    let seed = state.seed();
    let mut body = FitStatus {
        session_id: id,
        status: "running",
        warnings: Vec::new(),
        diagnostics: None,
        summary: None,
        error: None,
    };
    match state {
        FitState::Running { .. } => {}
        FitState::Failed { error, .. } => {
            body.status = "failed";
            body.error = Some(error);
        }
        FitState::Done(o) => {
            body.status = if o.posterior.converged { "converged" } else { "not_converged" };
            body.warnings = o.warnings.clone();
            body.diagnostics = Some(o.posterior.diagnostics.clone());
            body.summary = Some(o.posterior.summary());
        }
    }
    Ok(reply(Some(seed), body))
}

/// A converged fit, or the 409/404 explaining why there is none.
fn usable_fit(s: &AppState, id: &str) -> ApiResult<(Arc<Session>, Arc<FitOutcome>)> {
    let (session, state) = fit_state(s, id)?;
    let seed = state.seed();
    match state {
        FitState::Running { .. } => Err(ApiError::conflict(format!("fit for `{id}` is still running")).with_seed(seed)),
        FitState::Failed { error, .. } => {
            Err(ApiError::conflict(format!("fit for `{id}` failed: {}", error.message)).with_seed(seed))
        }
        FitState::Done(o) if !o.posterior.converged => Err(ApiError::conflict(format!(
            "fit for `{id}` did not converge (max r_hat {:.3})",
            o.posterior.diagnostics.max_r_hat()
        ))
        .with_seed(seed)),
        FitState::Done(o) => Ok((session, o)),
    }
}

#[derive(Debug, Serialize)]
pub struct PosteriorBody {
    pub session_id: String,
    pub summary: BTreeMap<String, Summary>,
    pub posterior: PosteriorDraws,
}

pub async fn posterior(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let (_, fit) = usable_fit(&s, &id)?;
    let body = PosteriorBody { session_id: id, summary: fit.posterior.summary(), posterior: fit.posterior.clone() };
    Ok(reply(Some(fit.mcmc.seed), body))
}

// ---------------------------------------------------------------- predict

/// Posterior collapsed to one parameter value.
#[derive(Debug, Clone, Copy, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PointPosterior {
    pub beta0: f64,
    pub beta1: f64,
    pub alpha: f64,
    pub mean_service: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ModeParam {
    #[default]
    LongTerm,
    ShortTerm,
}

/// Long-term predictions condition on one observation; short-term ones
/// refit after each realized month in `future`.
#[derive(Debug, Clone, Default, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub session_id: Option<String>,
    pub point: Option<PointPosterior>,
    /// Month index of the conditioning observation (default: last month).
    pub tau: Option<i64>,
    /// Count at `tau` (default: the observed one).
    pub n: Option<u64>,
    /// Months ahead (default 1 to 8).
    pub horizons: Option<Vec<u32>>,
    pub mode: Option<ModeParam>,
    /// Realized counts for the months after `tau` (short-term mode).
    pub future: Option<Vec<u64>>,
    pub seed: Option<u64>,
}

struct Source {
    draws: PosteriorDraws,
    fit: Option<(Arc<Session>, Arc<FitOutcome>)>,
    tau: i64,
    n: u64,
    horizons: Vec<u32>,
}

fn resolve(
    s: &AppState,
    session_id: &Option<String>,
    point: &Option<PointPosterior>,
    tau: Option<i64>,
    n: Option<u64>,
    horizons: &Option<Vec<u32>>,
) -> ApiResult<Source> {
    let horizons = horizons.clone().unwrap_or_else(|| (1..=8).collect());
    match (session_id, point) {
        (Some(id), None) => {
            let (session, fit) = usable_fit(s, id)?;
            let (t_last, _) = session.series.last().expect("non-empty series");
            let tau = tau.unwrap_or(t_last);
            let n = match n {
                Some(n) => n,
                None => session
                    .series
                    .count_at(tau)
                    .ok_or_else(|| ApiError::bad_request(format!("no observation at month {tau}; set n")))?,
            };
            Ok(Source { draws: fit.posterior.clone(), fit: Some((session, fit)), tau, n, horizons })
        }
        (None, Some(p)) => {
            let params = Params { beta0: p.beta0, beta1: p.beta1, alpha: p.alpha };
            Ok(Source {
                draws: PosteriorDraws::point_mass(params, p.mean_service),
                fit: None,
                tau: tau.ok_or_else(|| ApiError::bad_request("`tau` is required with a point posterior"))?,
                n: n.ok_or_else(|| ApiError::bad_request("`n` is required with a point posterior"))?,
                horizons,
            })
        }
        _ => Err(ApiError::bad_request("give exactly one of `session_id` or `point`")),
    }
}

#[derive(Debug, Serialize)]
pub struct PredictBody {
    pub prediction: PredictionSeries,
}

pub async fn predict(State(s): State<Shared>, Payload(req): Payload<PredictRequest>) -> ApiResult<impl IntoResponse> {
    let seed = choose_seed(req.seed);
    let src = resolve(&s, &req.session_id, &req.point, req.tau, req.n, &req.horizons).map_err(|e| e.with_seed(seed))?;
    let prediction = match req.mode.unwrap_or_default() {
        ModeParam::LongTerm => {
            compute(&s, Some(seed), move || predict_from(&src.draws, src.tau, src.n, &src.horizons, &Scenario::Baseline, seed))
                .await?
        }
        ModeParam::ShortTerm => {
            let (session, fit) = src
                .fit
                .ok_or_else(|| ApiError::bad_request("short-term mode refits and needs `session_id`").with_seed(seed))?;
            let future = req
                .future
                .ok_or_else(|| ApiError::bad_request("short-term mode needs `future` counts").with_seed(seed))?;
            let tau = src.tau;
            let history = CountSeries {
                points: session.series.points.iter().copied().filter(|p| p.0 <= tau).collect(),
                ..(*session.series).clone()
            };
            let future = CountSeries::new(
                history.class_id.clone(),
                history.origin,
                future.iter().enumerate().map(|(i, &c)| (tau + 1 + i as i64, c)).collect(),
                Provenance::Observed,
            )
            .map_err(|e| ApiError::from(e).with_seed(seed))?;
            let cfg = McmcConfig { seed, ..fit.mcmc };
            let priors = fit.priors;
            compute(&s, Some(seed), move || predict_short_term(&history, &future, &priors, &cfg)).await?
        }
    };
    Ok(reply(Some(seed), PredictBody { prediction }))
}

// --------------------------------------------------------------- scenario

#[derive(Debug, Clone, Copy, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ServiceSwitch {
    /// Mean service time for arrivals after `tau`.
    #[serde(alias = "E_S_new")]
    pub mean_service_new: f64,
}

/// Baseline and one what-if over the same horizons. Set exactly one of
/// `switch`, `lambda_scale` or `pause`.
#[derive(Debug, Clone, Default, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub session_id: Option<String>,
    pub point: Option<PointPosterior>,
    pub tau: Option<i64>,
    pub n: Option<u64>,
    pub horizons: Option<Vec<u32>>,
    pub switch: Option<ServiceSwitch>,
    pub lambda_scale: Option<f64>,
    /// Months without arrivals after `tau`.
    pub pause: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct ScenarioBody {
    pub baseline: PredictionSeries,
    pub scenario: PredictionSeries,
}

pub async fn scenario(State(s): State<Shared>, Payload(req): Payload<ScenarioRequest>) -> ApiResult<impl IntoResponse> {
    let seed = choose_seed(req.seed);
    let what_if = match (req.switch, req.lambda_scale, req.pause) {
        (Some(sw), None, None) => Scenario::ServiceSwitch { mean_service_new: sw.mean_service_new },
        (None, Some(f), None) => Scenario::LambdaScale { factor: f },
        (None, None, Some(p)) => Scenario::Pause { months: p },
        _ => {
            return Err(ApiError::bad_request("give exactly one of `switch`, `lambda_scale`, `pause`").with_seed(seed))
        }
    };
    let src = resolve(&s, &req.session_id, &req.point, req.tau, req.n, &req.horizons).map_err(|e| e.with_seed(seed))?;
    let body = compute(&s, Some(seed), move || {
        Ok(ScenarioBody {
            baseline: predict_from(&src.draws, src.tau, src.n, &src.horizons, &Scenario::Baseline, seed)?,
            scenario: predict_from(&src.draws, src.tau, src.n, &src.horizons, &what_if, seed)?,
        })
    })
    .await?;
    Ok(reply(Some(seed), body))
}

// ---------------------------------------------------------------- recover

#[derive(Debug, Clone, Copy, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InterventionParam {
    /// Multiply the arrival rate by this factor.
    ScaleLambda(f64),
    /// Stop arrivals until the recovery level, then resume until this level.
    PauseResume(f64),
}

/// Mean time for a congested Pareto M/G/∞ queue to fall to `k`. Give
/// either `alpha` or `scv` for the Pareto shape.
#[derive(Debug, Clone, Default, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RecoverRequest {
    pub lambda: f64,
    #[serde(alias = "E_S")]
    pub mean_service: f64,
    pub alpha: Option<f64>,
    pub scv: Option<f64>,
    pub n: f64,
    pub k: Option<f64>,
    pub intervention: Option<InterventionParam>,
    pub path_points: Option<usize>,
}

pub async fn recover(State(s): State<Shared>, Payload(req): Payload<RecoverRequest>) -> ApiResult<impl IntoResponse> {
    let args = RecoverArgs {
        lambda: Some(req.lambda),
        mean_service: Some(req.mean_service),
        alpha: req.alpha,
        scv: req.scv,
        n: Some(req.n),
        k: req.k,
        scale_lambda: match req.intervention {
            Some(InterventionParam::ScaleLambda(f)) => Some(f),
            _ => None,
        },
        pause_resume: match req.intervention {
            Some(InterventionParam::PauseResume(j)) => Some(j),
            _ => None,
        },
        path_points: req.path_points,
    };
    if args.alpha.is_some() == args.scv.is_some() {
        return Err(ApiError::bad_request("give exactly one of `alpha` or `scv`"));
    }
    let report: RecoverReport = compute(&s, None, move || recover_report(&args)).await?;
    Ok(reply(None, report))
}

// ---------------------------------------------------------------- schemas

pub const SCHEMA_NAMES: [&str; 5] = ["series", "fit", "predict", "scenario", "recover"];

pub fn schema_of(name: &str) -> Option<schemars::Schema> {
    Some(match name {
        "series" => schemars::schema_for!(SeriesRequest),
        "fit" => schemars::schema_for!(FitRequest),
        "predict" => schemars::schema_for!(PredictRequest),
        "scenario" => schemars::schema_for!(ScenarioRequest),
        "recover" => schemars::schema_for!(RecoverRequest),
        _ => return None,
    })
}

#[derive(Debug, Serialize)]
pub struct SchemaIndex {
    pub schemas: Vec<&'static str>,
}

pub async fn schemas() -> impl IntoResponse {
    reply(None, SchemaIndex { schemas: SCHEMA_NAMES.to_vec() })
}

pub async fn schema(Path(name): Path<String>) -> ApiResult<Json<schemars::Schema>> {
    schema_of(&name).map(Json).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_schema", format!("no schema `{name}`"), "see GET /schemas")
    })
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route", "see the route list in the README")
}
