//! HTTP/JSON service around the modelling loop: upload data, fit an initial
//! model, inspect anchors and slices, edit constraints, retrain.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/datasets` | CSV body, `?output=` optional |
//! | POST | `/sessions` | `{"dataset_id"}` |
//! | GET | `/sessions/{id}` | |
//! | PUT/GET | `/sessions/{id}/constraints` | constraint list |
//! | POST | `/sessions/{id}/jobs` | `{"kind", "config", "certify"}` |
//! | GET | `/sessions/{id}/anchors` | `?model=&grid=&scaling=` |
//! | GET | `/sessions/{id}/slice` | `?model=&dims=&anchor=&samples=` |
//! | GET | `/jobs/{id}` | `?since=` for incremental logs |
//! | GET | `/jobs/{id}/log` | line-delimited JSON |
//! | GET | `/models/{id}` | artifact file |
//! | GET | `/models/{id}/certification` | |
//! | POST | `/models/{id}/predict` | `{"points"}` |

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::routing::{get, post};
use axum::Router;

mod jobs;
mod routes;
pub mod store;

pub use store::{Store, StoreError};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Mutex<Store>>,
}

impl AppState {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Ok(AppState {
            inner: Arc::new(Mutex::new(Store::open(dir)?)),
        })
    }

    pub fn lock(&self) -> MutexGuard<'_, Store> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    use routes::*;
    Router::new()
        .route("/datasets", post(post_dataset))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/constraints", get(get_constraints).put(put_constraints))
        .route("/sessions/{id}/jobs", post(post_job))
        .route("/sessions/{id}/anchors", get(get_anchors))
        .route("/sessions/{id}/slice", get(get_slice))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/log", get(get_job_log))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/certification", get(get_certification))
        .route("/models/{id}/predict", post(post_predict))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, dir: &Path) -> std::io::Result<()> {
    let state = AppState::open(dir).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
