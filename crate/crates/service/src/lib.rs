//! HTTP front end for corpora, sessions, asynchronous searches, feedback
//! and metrics, persisted in a single store directory.

pub mod api;
pub mod app;
pub mod config;
pub mod store;

pub use app::{App, AppError, StartError};
pub use config::{BackendSpec, ServiceConfig};

/// Binds, resumes interrupted work and serves until Ctrl-C. The bound
/// address is printed to stderr as `listening on http://ADDR`.
pub async fn serve(config: ServiceConfig) -> Result<(), StartError> {
    let (app, recovery) = App::open(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|source| StartError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
    let addr = listener.local_addr().map_err(StartError::Serve)?;
    if !recovery.interrupted.is_empty() {
        tracing::warn!(count = recovery.interrupted.len(), "searches interrupted by the last shutdown");
    }
    app.resume(&recovery);
    eprintln!("listening on http://{addr}");
    axum::serve(listener, api::router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(StartError::Serve)
}
