//! HTTP service over the `occq` engine.
//!
//! Routes: `POST /series`, `POST /fit`, `GET /fit/{id}`,
//! `GET /fit/{id}/posterior`, `POST /predict`, `POST /scenario`,
//! `POST /recover`, `GET /health`, `GET /schemas`, `GET /schemas/{name}`.

pub mod config;
pub mod error;
pub mod routes;
pub mod store;

use std::path::Path;
use std::sync::Arc;

use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use occq::cli::ServeArgs;
use occq::{Error, Result};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use config::ServiceConfig;
pub use routes::{AppState, Shared};

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    if origins.iter().any(|o| o == "*") {
        layer.allow_origin(Any)
    } else {
        let list: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
        layer.allow_origin(AllowOrigin::list(list))
    }
}

pub fn router(state: Shared) -> Router {
    let origins = state.config.cors_origins.clone();
    Router::new()
        .route("/health", get(routes::health))
        .route("/series", post(routes::series))
        .route("/fit", post(routes::fit))
        .route("/fit/{id}", get(routes::fit_status))
        .route("/fit/{id}/posterior", get(routes::posterior))
        .route("/predict", post(routes::predict))
        .route("/scenario", post(routes::scenario))
        .route("/recover", post(routes::recover))
        .route("/schemas", get(routes::schemas))
        .route("/schemas/{name}", get(routes::schema))
        .fallback(routes::not_found)
        .layer(cors(&origins))
        .with_state(state)
}

pub fn app(config: ServiceConfig) -> Router {
    router(Arc::new(AppState::new(config)))
}

pub async fn serve(config: ServiceConfig) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| Error::Io(format!("{}: {e}", config.bind)))?;
    let addr = listener.local_addr()?;
    eprintln!("occq {} listening on http://{addr}", occq::cli::manifest::ENGINE_VERSION);
    axum::serve(listener, app(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Entry point for `occq serve`.
pub fn serve_hook(args: &ServeArgs, config: Option<&Path>) -> Result<()> {
    let config = ServiceConfig::load(config, args)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(config))
}
