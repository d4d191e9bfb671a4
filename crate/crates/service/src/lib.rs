//! HTTP backend for the human-operator study.
//!
//! Participants pick a role, play an unscored tutorial scenario and then
//! any number of scored scenarios drawn from the validation pool. Every
//! action goes through the same scenario environment and scoring code as
//! the agents, in continue-through mode, and is appended to a JSON-lines
//! event log before the response is sent. Replaying that log rebuilds every
//! session, which is also how the service recovers after a restart.

pub mod http;
pub mod model;
pub mod report;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use http::router;
pub use model::Role;
pub use session::{Service, ServiceConfig, ServiceError};

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, service: Arc<Service>, media_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service, media_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
