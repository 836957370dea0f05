//! HTTP service over the memory-search core: bank management, search,
//! episodes, rollout groups, GRPO math, training, and evaluation, all as
//! JSON endpoints. The CLI is a client of this service; so is any external
//! training stack that wants the objective math served out-of-process.

mod routes;
mod state;

pub use routes::api_router;
pub use state::AppState;

use std::net::SocketAddr;
use std::sync::Arc;

use memsearch_core::config::RunConfig;
use memsearch_core::Result;

/// Builds the service state and router for a configuration.
pub fn build(config: RunConfig) -> Result<(Arc<AppState>, axum::Router)> {
    let state = Arc::new(AppState::new(config)?);
    let router = api_router(state.clone());
    Ok((state, router))
}

/// Binds and serves until the process ends. Returns the bound address
/// through `on_bound` before blocking, so callers can connect to an
/// ephemeral port.
pub async fn serve(
    config: RunConfig,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<()> {
    let (_state, router) = build(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    tracing::info!(%bound, "serving");
    on_bound(bound);
    axum::serve(listener, router).await?;
    Ok(())
}

/// Starts the service on an ephemeral localhost port in a background task;
/// returns the base URL. Used by the CLI when no remote server is given and
/// by tests.
pub async fn spawn_ephemeral(config: RunConfig) -> Result<String> {
    let (_state, router) = build(config)?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let bound = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!(error = %e, "ephemeral server exited");
        }
    });
    Ok(format!("http://{bound}"))
}
