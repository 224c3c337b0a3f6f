//! Serves selected disagreement cases to raters and records their ratings.
//!
//! Endpoints:
//! - `GET /api/cases?rater=ID`: `[{case_id, model_id, reference, candidate, rated}]`,
//!   where `model_id` is a blinded alias
//! - `POST /api/ratings`: `{case_id, model_id, rater_id, rating, comment?}`, 201 or 422
//! - `GET /api/progress?rater=ID`: `{rated, total}`
//! - `GET /api/export`: the aggregated expert series

pub mod api;
pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::Router;
use ctm_core::outputs::{read_jsonl, OutputError, SelectionRecord};
use ctm_core::ratings::RatingError;
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use api::{Accepted, CaseItem, Progress};
pub use store::{model_alias, ServedCase, Store};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot read selection file {path}: {source}")]
    SelectionFile {
        path: String,
        #[source]
        source: OutputError,
    },
    #[error("selection: {0}")]
    Selection(String),
    #[error(transparent)]
    Ratings(#[from] RatingError),
    #[error("cannot listen on port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Server(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub cases: PathBuf,
    pub ratings: PathBuf,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
}

pub fn load_selection(path: &Path) -> Result<Vec<SelectionRecord>, ServiceError> {
    let wrap = |source: OutputError| ServiceError::SelectionFile {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|e| wrap(e.into()))?;
    read_jsonl(file).map_err(wrap)
}

/// API routes, plus static UI assets as the fallback when a directory is given.
pub fn app(store: Arc<Store>, static_dir: Option<&Path>) -> Router {
    let router = api::routes(store);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

pub struct RunningService {
    pub addr: SocketAddr,
    pub store: Arc<Store>,
    pub task: tokio::task::JoinHandle<Result<(), ServiceError>>,
}

/// Loads the selection, opens the ratings file, binds and starts serving.
pub async fn start(config: &ServiceConfig) -> Result<RunningService, ServiceError> {
    let selection = load_selection(&config.cases)?;
    let store = Arc::new(Store::open(selection, &config.ratings)?);
    let listener = TcpListener::bind(("127.0.0.1", config.port))
        .await
        .map_err(|source| ServiceError::Bind {
            port: config.port,
            source,
        })?;
    let addr = listener.local_addr().map_err(ServiceError::Server)?;
    let router = app(store.clone(), config.static_dir.as_deref());
    let task = tokio::spawn(async move { axum::serve(listener, router).await.map_err(ServiceError::Server) });
    Ok(RunningService { addr, store, task })
}
