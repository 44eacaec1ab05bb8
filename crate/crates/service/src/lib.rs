//! HTTP/JSON API over datasets, transform sessions and association matrices.
//!
//! Datasets are write-once. Each session owns an ordered transform stack and
//! a matrix cache keyed by stack hash, kind, request and config. Computations
//! run on the blocking pool and can be polled as jobs.

pub mod api;
pub mod error;
pub mod state;

use std::future::Future;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{delete, get, post};
use axum::Router;
use tokio::net::TcpListener;

pub use error::ApiError;
pub use state::{AppState, ServiceConfig};

/// Builds the router over shared state.
pub fn app(state: Arc<AppState>) -> Router {
    let limit = state.config.body_limit;
    Router::new()
        .route("/health", get(api::health))
        .route("/datasets", post(api::upload_dataset).get(api::list_datasets))
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", get(api::get_session))
        .route("/sessions/{id}/transforms", post(api::push_transform))
        .route("/sessions/{id}/transforms/last", delete(api::undo_transform))
        .route("/sessions/{id}/compute", post(api::compute))
        .route("/sessions/{id}/jobs/{job}", get(api::get_job))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, app(state))
        .with_graceful_shutdown(shutdown)
        .await
}
