//! HTTP service that hosts elicitation studies: condition assignment, step
//! flow, response storage and analysis.

pub mod api;
pub mod config;
pub mod error;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;

pub use api::{app, router};
pub use config::StudyConfig;
pub use error::{ApiError, ErrorCode};
pub use store::AppState;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Server settings, read from `BELIEF_BIND`, `BELIEF_DATA_DIR` and
/// `BELIEF_SEED`.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub seed: u64,
    pub ui_dir: Option<PathBuf>,
}

impl Settings {
    pub fn from_env() -> Result<Self, String> {
        let bind = std::env::var("BELIEF_BIND").unwrap_or_else(|_| DEFAULT_BIND.into());
        let bind = bind.parse().map_err(|e| format!("BELIEF_BIND `{bind}`: {e}"))?;
        let data_dir = std::env::var("BELIEF_DATA_DIR").map_or_else(|_| PathBuf::from("belief-data"), PathBuf::from);
        let seed = match std::env::var("BELIEF_SEED") {
            Ok(s) => s.parse().map_err(|e| format!("BELIEF_SEED `{s}`: {e}"))?,
            Err(_) => 0,
        };
        Ok(Settings {
            bind,
            data_dir,
            seed,
            ui_dir: std::env::var("BELIEF_UI_DIR").ok().map(PathBuf::from),
        })
    }
}

/// Resolves on SIGINT or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Serves until `shutdown` resolves, then syncs every study log.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    ui_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app(state.clone(), ui_dir))
        .with_graceful_shutdown(shutdown)
        .await?;
    state.flush().await;
    tracing::info!("store flushed");
    Ok(())
}

/// Opens the store and binds, failing before any request is accepted.
pub async fn bind(settings: &Settings) -> Result<(tokio::net::TcpListener, AppState), String> {
    let state = AppState::open(&settings.data_dir, settings.seed)?;
    let listener = tokio::net::TcpListener::bind(settings.bind)
        .await
        .map_err(|e| format!("cannot bind {}: {e}", settings.bind))?;
    Ok((listener, state))
}

pub fn init_tracing() {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
}
