//! Scoring service: single and batch scoring over a revision source, a
//! persistent score cache, a pre-caching worker, the patrol queue and label
//! store, and pipeline jobs for command-line clients.

pub mod cache;
pub mod error;
pub mod labels;
pub mod routes;
pub mod state;

use std::future::Future;
use std::sync::Arc;

pub use error::ApiError;
pub use routes::router;
pub use state::{spawn_precache, Service, ServiceConfig};

/// Serves until `shutdown` resolves, running the precache worker when
/// configured. The worker is stopped and joined before returning.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let worker = service.config.precache.then(|| spawn_precache(service.clone()));
    let result = axum::serve(listener, router(service.clone())).with_graceful_shutdown(shutdown).await;
    service.stop();
    if let Some(w) = worker {
        let _ = tokio::task::spawn_blocking(move || w.join()).await;
    }
    result
}
