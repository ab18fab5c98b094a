//! HTTP API over one problem bank directory.
//!
//! All state lives on disk: the bank manifest and fragments, and one
//! transcript per session under `<bank>/sessions/`. A restarted server picks
//! up where the previous one stopped. See `docs/api.md` for the endpoint
//! reference.

mod error;
mod handlers;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::Router;
use examforge::bank::{load_bank, BankError};
use examforge::session::SessionStore;
use tokio::net::TcpListener;

pub use error::ApiError;

/// Environment variable naming the default bank directory.
pub const BANK_ENV: &str = "EXAMFORGE_BANK";

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    bank_dir: PathBuf,
    store: SessionStore,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(bank_dir: impl Into<PathBuf>) -> Self {
        let bank_dir = bank_dir.into();
        Self {
            inner: Arc::new(Inner {
                store: SessionStore::for_bank(&bank_dir),
                bank_dir,
                session_locks: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn bank_dir(&self) -> &Path {
        &self.inner.bank_dir
    }

    fn store(&self) -> &SessionStore {
        &self.inner.store
    }

    /// In-process lock serializing mutations of one session. The transcript
    /// file lock taken underneath also guards against other processes.
    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut map = self
            .inner
            .session_locks
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        map.entry(id.to_owned()).or_default().clone()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/bank", get(handlers::bank_summary))
        .route("/api/bank/problems", get(handlers::list_problems))
        .route("/api/bank/problems/{id}", get(handlers::get_problem))
        .route(
            "/api/sessions",
            get(handlers::list_sessions).post(handlers::create_session),
        )
        .route("/api/sessions/{id}", get(handlers::get_session))
        .route("/api/sessions/{id}/step", post(handlers::step))
        .route("/api/sessions/{id}/accept", post(handlers::accept))
        .route("/api/sessions/{id}/abandon", post(handlers::abandon))
        .route("/api/sessions/{id}/render", get(handlers::render))
        .route("/api/sessions/{id}/candidates", get(handlers::candidates))
        .fallback(handlers::not_found)
        .with_state(state)
}

/// Checks that `bank_dir` holds a loadable bank, then serves the API on
/// `listen` until Ctrl-C.
pub async fn serve(bank_dir: PathBuf, listen: SocketAddr) -> std::io::Result<()> {
    let probe = bank_dir.clone();
    let bank = tokio::task::spawn_blocking(move || load_bank(&probe))
        .await
        .map_err(std::io::Error::other)?
        .map_err(|e: BankError| std::io::Error::other(e.to_string()))?;
    let listener = TcpListener::bind(listen).await?;
    tracing::info!(
        bank = %bank_dir.display(),
        problems = bank.problems.len(),
        addr = %listener.local_addr()?,
        "serving examforge API"
    );
    axum::serve(listener, router(AppState::new(bank_dir)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
