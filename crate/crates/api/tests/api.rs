use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use occq::inference::posterior::{simulate_counts, Params};
use occq::inference::series::{write_counts_csv, YearMonth};
use occq_api::{app, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn raw(app: &Router, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method("POST")
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn service() -> Router {
    app(ServiceConfig::default())
}

fn point() -> Value {
    json!({"beta0": 677.4, "beta1": -3.77, "alpha": 4.0, "mean_service": 5.22})
}

fn means(series: &Value) -> Vec<f64> {
    series["points"].as_array().unwrap().iter().map(|p| p["mean"].as_f64().unwrap()).collect()
}

fn theft_csv() -> String {
    let truth = Params { beta0: 677.4, beta1: -3.77, alpha: 4.0 };
    let mut s = simulate_counts(&truth, 5.22, 49, YearMonth::new(2015, 3).unwrap(), 42).unwrap();
    s.class_id = "theft".into();
    let mut out = Vec::new();
    write_counts_csv(&[s], &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

async fn fitted_session(app: &Router, iterations: usize) -> (String, Value) {
    let (st, v) = call(app, "POST", "/series", Some(json!({"csv": theft_csv()}))).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    let id = v["session_id"].as_str().unwrap().to_string();
    let priors = json!({"beta0": {"mu": 680.0, "sigma": 60.0}, "beta1": {"mu": -4.0, "sigma": 2.0}, "mean_service": 5.22});
    let (st, v) = call(app, "POST", "/fit", Some(json!({"session_id": id, "priors": priors, "iterations": iterations, "seed": 9}))).await;
    assert_eq!(st, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["status"], "running");
    assert_eq!(v["seed"], 9);
    for _ in 0..600 {
        let (st, v) = call(app, "GET", &format!("/fit/{id}"), None).await;
        assert_eq!(st, StatusCode::OK);
        if v["status"] != "running" {
            return (id, v);
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("fit did not finish");
}

#[tokio::test]
async fn health_reports_version() {
    let (st, v) = call(&service(), "GET", "/health", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["engine_version"], occq::cli::manifest::ENGINE_VERSION);
    assert!(v.get("seed").is_some());
}

#[tokio::test]
async fn predict_at_zero_horizon_returns_observation() {
    let body = json!({"point": point(), "tau": 48, "n": 2500, "horizons": [0, 1, 2], "seed": 4});
    let (st, v) = call(&service(), "POST", "/predict", Some(body)).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["seed"], 4);
    let p0 = &v["prediction"]["points"][0];
    assert_eq!(p0["mean"], 2500.0);
    assert_eq!(p0["sd"], 0.0);
}

#[tokio::test]
async fn no_op_switch_matches_baseline() {
    let app = service();
    let body = json!({"point": point(), "tau": 48, "n": 2500, "switch": {"E_S_new": 5.22}, "seed": 1});
    let (st, v) = call(&app, "POST", "/scenario", Some(body)).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["baseline"], v["scenario"].as_object().map(|o| {
        let mut o = o.clone();
        o.insert("scenario".into(), json!({"kind": "baseline"}));
        Value::Object(o)
    }).unwrap());
    let (_, p) = call(&app, "POST", "/predict", Some(json!({"point": point(), "tau": 48, "n": 2500, "seed": 1}))).await;
    assert_eq!(means(&p["prediction"]), means(&v["scenario"]));
}

#[tokio::test]
async fn predict_is_idempotent_for_equal_seeds() {
    let app = service();
    let body = r#"{"point": {"beta0": 600, "beta1": -3, "alpha": 3.5, "mean_service": 5}, "tau": 40, "n": 2300, "seed": 77}"#;
    let (s1, a) = raw(&app, "/predict", body).await;
    let (s2, b) = raw(&app, "/predict", body).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
}

#[tokio::test]
async fn server_chooses_and_echoes_a_seed() {
    let body = json!({"point": point(), "tau": 48, "n": 2500});
    let (_, v) = call(&service(), "POST", "/predict", Some(body)).await;
    let seed = v["seed"].as_u64().unwrap();
    assert_eq!(v["prediction"]["seed"].as_u64().unwrap(), seed);
}

#[tokio::test]
async fn theft_fan_ordering() {
    let app = service();
    let (id, status) = fitted_session(&app, 4000).await;
    assert_eq!(status["status"], "converged", "{status}");
    assert!(status["diagnostics"]["r_hat"]["alpha"].as_f64().unwrap() <= 1.05);

    let mut fans = Vec::new();
    for es in [3.0, 8.0] {
        let body = json!({"session_id": id, "switch": {"mean_service_new": es}, "seed": 2});
        let (st, v) = call(&app, "POST", "/scenario", Some(body)).await;
        assert_eq!(st, StatusCode::OK, "{v}");
        fans.push((means(&v["baseline"]), means(&v["scenario"])));
    }
    let (base, low) = &fans[0];
    let high = &fans[1].1;
    for h in 0..base.len() {
        assert!(low[h] < base[h] && base[h] < high[h], "horizon {}: {} {} {}", h + 1, low[h], base[h], high[h]);
    }

    let (st, v) = call(&app, "GET", &format!("/fit/{id}/posterior"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["seed"], 9);
    assert!(v["posterior"]["draws"].as_array().unwrap().len() >= 4000);

    let (st, v) = call(&app, "POST", "/predict", Some(json!({"session_id": id, "horizons": [0, 1]}))).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["prediction"]["points"][0]["sd"], 0.0);

    let (st, v) = call(&app, "POST", "/predict", Some(json!({"session_id": id, "mode": "short_term", "future": [2400, 2390], "seed": 3}))).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["prediction"]["points"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn non_converged_fit_is_a_conflict() {
    let app = service();
    let (id, status) = fitted_session(&app, 12).await;
    assert_eq!(status["status"], "not_converged", "{status}");
    let (st, v) = call(&app, "POST", "/predict", Some(json!({"session_id": id}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"]["kind"], "fit_not_usable");
    let (st, _) = call(&app, "GET", &format!("/fit/{id}/posterior"), None).await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn recover_with_lambda_scaling() {
    let body = json!({"lambda": 10.0, "E_S": 3.0, "scv": 3.0, "n": 60.0, "intervention": {"scale_lambda": 0.8}});
    let (st, v) = call(&service(), "POST", "/recover", Some(body)).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert!(v["intervention"]["beta_months"].as_f64().unwrap() < v["baseline"]["beta_months"].as_f64().unwrap());
    assert!(v.get("seed").is_some());
}

#[tokio::test]
async fn error_statuses() {
    let app = service();
    let (st, v) = raw(&app, "/predict", "{not json").await;
    assert_eq!(st, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(&v));

    let (st, v) = call(&app, "POST", "/predict", Some(json!({"point": point(), "tau": 48, "n": 10, "bogus": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "invalid_payload");
    assert!(v["engine_version"].is_string());

    let (st, _) = call(&app, "POST", "/series", Some(json!({"csv": "month,class_id,count\n2020-01,a,x\n"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let (st, v) = call(&app, "POST", "/predict", Some(json!({"session_id": "nope"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "unknown_session");
    let (st, _) = call(&app, "GET", "/fit/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let alpha2 = json!({"beta0": 600.0, "beta1": -3.0, "alpha": 2.0, "mean_service": 5.0});
    let (st, v) = call(&app, "POST", "/predict", Some(json!({"point": alpha2, "tau": 48, "n": 2500, "seed": 5}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["kind"], "unsupported");
    assert_eq!(v["seed"], 5);

    let body = json!({"lambda": 10.0, "mean_service": 3.0, "alpha": 3.0, "n": 20.0});
    let (st, v) = call(&app, "POST", "/recover", Some(body)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["kind"], "infeasible");
    assert!(v["error"]["hint"].as_str().unwrap().contains("k"));

    let (st, _) = call(&app, "GET", "/no/such/route", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn busy_workers_give_503() {
    let cfg = ServiceConfig { workers: 1, queue_timeout_secs: 0, ..ServiceConfig::default() };
    let app = app(cfg);
    let (_, v) = call(&app, "POST", "/series", Some(json!({"csv": theft_csv()}))).await;
    let id = v["session_id"].as_str().unwrap().to_string();
    let priors = json!({"beta0": {"mu": 680.0, "sigma": 60.0}, "beta1": {"mu": -4.0, "sigma": 2.0}, "mean_service": 5.22});
    let (st, _) = call(&app, "POST", "/fit", Some(json!({"session_id": id, "priors": priors, "iterations": 30000, "seed": 1}))).await;
    assert_eq!(st, StatusCode::ACCEPTED);
    let (st, v) = call(&app, "POST", "/predict", Some(json!({"point": point(), "tau": 48, "n": 2500}))).await;
    assert_eq!(st, StatusCode::SERVICE_UNAVAILABLE, "{v}");
    assert_eq!(v["error"]["kind"], "capacity");
    let (st, _) = call(&app, "POST", "/fit", Some(json!({"session_id": id, "priors": priors, "seed": 2}))).await;
    assert_eq!(st, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn schemas_are_published() {
    let app = service();
    let (st, v) = call(&app, "GET", "/schemas", None).await;
    assert_eq!(st, StatusCode::OK);
    for name in v["schemas"].as_array().unwrap() {
        let (st, s) = call(&app, "GET", &format!("/schemas/{}", name.as_str().unwrap()), None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(s["type"], "object");
    }
    let (_, s) = call(&app, "GET", "/schemas/predict", None).await;
    assert!(s["properties"]["horizons"].is_object());
}

#[tokio::test]
async fn cors_allows_browser_origin() {
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/predict")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = service().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
