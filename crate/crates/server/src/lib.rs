//! HTTP front end of the poll hub.
//!
//! Anonymous cookie sessions vote on the open poll, submit maps and fetch
//! results; a background ticker closes due polls, trains on them, evolves
//! the next generated map and opens the next poll.

mod api;
mod error;
mod limiter;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use aesthevo::apm::{list_versions, load_latest, save_checkpoint};
use aesthevo::corpus::load_map_dir;
use aesthevo::pollhub::{Hub, HubConfig, HubError};
use aesthevo::{Origin, Registry};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use api::{router, Session, SubmitResponse, TilesetEntry, TilesetList, VoteRequest, VoteResponse};
pub use error::ApiError;
pub use limiter::RateLimiter;

pub const SESSION_COOKIE: &str = "aesthevo_session";
pub const ADMIN_HEADER: &str = "x-admin-token";
pub const ADMIN_TOKEN_ENV: &str = "AESTHEVO_ADMIN_TOKEN";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("startup: {0}")]
    Startup(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub poll_duration_secs: i64,
    pub homogeneous_chance: f64,
    /// Accepted submissions per session per hour.
    pub submissions_per_hour: usize,
    pub tick_secs: u64,
    pub image_scale: usize,
    pub seed: u64,
    /// Tileset packages; the built-in themes when absent.
    pub tilesets_dir: Option<PathBuf>,
    /// Web UI bundle served for non-API paths.
    pub static_dir: Option<PathBuf>,
    /// Checkpoint root adopted for tilesets that have no model yet.
    pub seed_checkpoints: Option<PathBuf>,
    /// Map directory (`<tileset>/*.json`) imported into an empty store.
    pub seed_corpus: Option<PathBuf>,
    #[serde(skip)]
    pub admin_token: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1".to_string(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            poll_duration_secs: 3 * 3600,
            homogeneous_chance: 0.10,
            submissions_per_hour: 50,
            tick_secs: 5,
            image_scale: 4,
            seed: 0,
            tilesets_dir: None,
            static_dir: None,
            seed_checkpoints: None,
            seed_corpus: None,
            admin_token: None,
        }
    }
}

impl ServerConfig {
    pub fn hub_config(&self) -> HubConfig {
        HubConfig {
            poll_duration_secs: self.poll_duration_secs,
            homogeneous_chance: self.homogeneous_chance,
            review_generated: false,
            image_scale: self.image_scale,
            seed: self.seed,
            admin_token: self.admin_token.clone(),
            ..HubConfig::default()
        }
    }

    pub fn registry(&self) -> Result<Registry, ServerError> {
        match &self.tilesets_dir {
            Some(dir) => Registry::load_dir(dir).map_err(|e| ServerError::Startup(e.to_string())),
            None => Ok(Registry::builtin()),
        }
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    pub hub: Arc<Mutex<Hub>>,
    pub limiter: Arc<Mutex<RateLimiter>>,
    pub clock: Clock,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(hub: Hub, submissions_per_hour: usize, clock: Clock) -> Self {
        AppState {
            hub: Arc::new(Mutex::new(hub)),
            limiter: Arc::new(Mutex::new(RateLimiter::new(submissions_per_hour, chrono::Duration::hours(1)))),
            clock,
            static_dir: None,
        }
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    pub fn lock(&self) -> std::sync::MutexGuard<'_, Hub> {
        self.hub.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

/// Opens the store under `cfg.data_dir` and applies the optional seeds.
pub fn open_hub(cfg: &ServerConfig, now: DateTime<Utc>) -> Result<Hub, ServerError> {
    let mut hub = Hub::open(&cfg.data_dir, cfg.registry()?, cfg.hub_config())?;
    let tilesets: Vec<String> = hub.registry().ids().map(str::to_string).collect();
    if let Some(root) = &cfg.seed_checkpoints {
        for t in &tilesets {
            let empty = list_versions(&hub.checkpoint_root(), t).map_err(HubError::from)?.is_empty();
            if empty && !hub.state().model_versions.contains_key(t) {
                if let Ok(model) = load_latest(root, t) {
                    save_checkpoint(&hub.checkpoint_root(), &model).map_err(HubError::from)?;
                }
            }
        }
    }
    if let Some(root) = &cfg.seed_corpus {
        if hub.state().maps.is_empty() {
            for t in &tilesets {
                let dir = root.join(t);
                if !dir.is_dir() {
                    continue;
                }
                let maps = load_map_dir(&dir).map_err(|e| ServerError::Startup(e.to_string()))?;
                for m in maps.iter().filter(|m| m.origin == Origin::User) {
                    hub.import_user_map(m, now)?;
                }
            }
        }
    }
    for t in &tilesets {
        hub.ensure_model(t, now)?;
    }
    Ok(hub)
}

/// One housekeeping pass: close and train due polls, evolve missing
/// generated maps without holding the store lock, and open the next poll.
pub fn housekeeping(state: &AppState) {
    let now = state.now();
    let report = state.lock().tick(now);
    for e in &report.errors {
        tracing::warn!("tick: {e}");
    }
    if !report.closed.is_empty() || !report.trained.is_empty() {
        tracing::info!(closed = ?report.closed, trained = ?report.trained, "polls finished");
    }
    for t in &report.needs_evolution {
        let job = match state.lock().prepare_evolution(t, now) {
            Ok(job) => job,
            Err(e) => {
                tracing::warn!("evolution setup for {t}: {e}");
                continue;
            }
        };
        match job.run() {
            Ok(map) => match state.lock().add_generated(map, now) {
                Ok(m) => tracing::info!(map = %m.id, tileset = %t, "generated map stored"),
                Err(e) => tracing::warn!("storing generated map for {t}: {e}"),
            },
            Err(e) => tracing::warn!("evolution for {t}: {e}"),
        }
    }
    if report.opened.is_none() && !report.needs_evolution.is_empty() {
        let again = state.lock().tick(now);
        if let Some(p) = again.opened {
            tracing::info!(poll = %p, "poll opened");
        }
    } else if let Some(p) = report.opened {
        tracing::info!(poll = %p, "poll opened");
    }
}

/// A bound server with its housekeeping task.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: AppState,
    pub http: JoinHandle<std::io::Result<()>>,
    pub ticker: JoinHandle<()>,
}

/// Binds the listener (port 0 picks a free port), starts the ticker and
/// serves in the background.
pub async fn start(cfg: ServerConfig) -> Result<RunningServer, ServerError> {
    let clock: Clock = Arc::new(Utc::now);
    let hub = tokio::task::spawn_blocking({
        let cfg = cfg.clone();
        let now = clock();
        move || open_hub(&cfg, now)
    })
    .await
    .map_err(|e| ServerError::Startup(e.to_string()))??;
    let mut state = AppState::new(hub, cfg.submissions_per_hour, clock);
    state.static_dir = cfg.static_dir.clone();
    let listener = TcpListener::bind((cfg.bind.as_str(), cfg.port)).await?;
    let addr = listener.local_addr()?;
    let app = router(state.clone());
    let http = tokio::spawn(async move { axum::serve(listener, app).await });
    let ticker = {
        let state = state.clone();
        let period = Duration::from_secs(cfg.tick_secs.max(1));
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                let s = state.clone();
                if let Err(e) = tokio::task::spawn_blocking(move || housekeeping(&s)).await {
                    tracing::error!("housekeeping panicked: {e}");
                }
            }
        })
    };
    Ok(RunningServer {
        addr,
        state,
        http,
        ticker,
    })
}
