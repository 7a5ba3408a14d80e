//! HTTP planning service: order sets in, candidate schedules out, with
//! accept/override decisions and replanning from a given clock.

mod error;
mod jobs;
pub mod planner;
mod routes;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use tokio::sync::Semaphore;

pub use error::ApiError;
pub use store::Store;

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub workers: usize,
    /// Wall-clock budget of one exact search.
    pub exact_budget: Duration,
    /// EXACT is refused up front for instances with more operations.
    pub exact_max_ops: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2),
            exact_budget: Duration::from_secs(30),
            exact_max_ops: 12,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub config: Arc<ServiceConfig>,
    workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> batchshop::Result<Self> {
        let store = match &config.data_dir {
            Some(dir) => Store::open(dir)?,
            None => Store::in_memory(),
        };
        let workers = Arc::new(Semaphore::new(config.workers.max(1)));
        Ok(AppState { store: Arc::new(store), config: Arc::new(config), workers })
    }

    /// Runs `job` on the blocking pool once a worker slot is free.
    /// `on_panic` records the failure if the job dies.
    pub(crate) fn spawn_job(&self, job: impl FnOnce() + Send + 'static, on_panic: impl FnOnce() + Send + 'static) {
        let workers = self.workers.clone();
        tokio::spawn(async move {
            let Ok(_permit) = workers.acquire_owned().await else { return };
            if tokio::task::spawn_blocking(job).await.is_err() {
                on_panic();
            }
        });
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(routes::health))
        .route("/orders", post(routes::submit_orders))
        .route("/orders/{id}", get(routes::get_orders))
        .route("/plans", post(routes::create_plan))
        .route("/plans/{id}", get(routes::get_plan))
        .route("/plans/{id}/decision", post(routes::decide_plan))
        .route("/plans/{id}/replan", post(routes::replan))
        .route("/plans/{id}/gantt.svg", get(routes::gantt))
        .route("/policies", get(routes::list_policies))
        .route("/policies/train", post(routes::train_policy))
        .route("/policies/{id}", get(routes::get_policy))
        .route("/audit", get(routes::audit_log))
        .with_state(state)
}

/// Binds `config.listen` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listen = config.listen;
    let state = AppState::new(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!("batchshop service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
