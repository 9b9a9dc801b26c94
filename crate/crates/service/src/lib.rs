//! HTTP service over the forecasting, routing and analytics engine.

pub mod api;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod scenario;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::{router, API_PREFIX};
pub use config::{ConfigError, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use state::AppState;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Bound listener plus the state it serves.
pub struct Server {
    pub addr: SocketAddr,
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
}

impl Server {
    pub async fn bind(cfg: ServiceConfig) -> Result<Self, ServeError> {
        let ship = cfg.load_default_ship()?;
        let listener = tokio::net::TcpListener::bind(&cfg.bind).await.map_err(|source| ServeError::Bind {
            addr: cfg.bind.clone(),
            source,
        })?;
        let addr = listener.local_addr()?;
        Ok(Self {
            addr,
            listener,
            state: Arc::new(AppState::new(cfg, ship)),
        })
    }

    pub fn state(&self) -> Arc<AppState> {
        self.state.clone()
    }

    pub async fn run(self) -> Result<(), ServeError> {
        log::info!("listening on http://{}{}", self.addr, API_PREFIX);
        axum::serve(self.listener, router(self.state)).await?;
        Ok(())
    }

    /// Serve on a background task; returns the bound address.
    pub fn spawn(self) -> (SocketAddr, tokio::task::JoinHandle<Result<(), ServeError>>) {
        let addr = self.addr;
        (addr, tokio::spawn(self.run()))
    }
}

pub async fn serve(cfg: ServiceConfig) -> Result<(), ServeError> {
    Server::bind(cfg).await?.run().await
}
