//! Shared service state: the repository, the dialogue manager and the
//! per-session dialogue states with their event streams.

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use medico_core::demo::{self, DemoError};
use medico_core::dialogue::{DialogueManager, DialogueState, PointingEvent, SystemResponse};
use medico_core::repository::RepositoryError;
use medico_core::search::RankParams;
use medico_core::{Clock, FixedClock, RandomIds, Repository, SeededIds};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::config::Config;

/// Events kept per session for subscribers that connect late.
pub const EVENT_HISTORY: usize = 200;
const EVENT_BUFFER: usize = 256;

pub const APOLOGY: &str = "Sorry, something went wrong while handling that. Please try again.";

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("cannot open data directory {path}: {source}. Check that it exists and is writable, or set dataDir.")]
    DataDir {
        path: String,
        #[source]
        source: RepositoryError,
    },
    #[error("cannot seed demo data into {path}: {source}. Remove the directory or unset demoSeed.")]
    Seed {
        path: String,
        #[source]
        source: DemoError,
    },
    #[error("cannot listen on port {port}: {source}. Stop the other process or choose another port.")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
}

/// Wall clock shifted by a constant, so a configured reference time keeps
/// advancing in real time.
#[derive(Clone, Copy, Debug)]
pub struct OffsetClock {
    pub offset: chrono::Duration,
}

impl Clock for OffsetClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now() + self.offset
    }
}

impl OffsetClock {
    pub fn for_config(config: &Config) -> Self {
        OffsetClock {
            offset: config.reference_time.map_or(chrono::Duration::zero(), |t| t - Utc::now()),
        }
    }
}

/// Writes the demo cohort's DICOM fixtures below `dir/dicom`, ingests them
/// and records the seeded annotations in the journal.
pub fn seed_data_dir(dir: &Path, seed: u64) -> Result<(), StartupError> {
    let seed_error = |source| StartupError::Seed {
        path: dir.display().to_string(),
        source,
    };
    let clock = Arc::new(FixedClock::new(demo::demo_now()));
    let mut repo = Repository::open(dir, clock.clone(), SeededIds::new(seed)).map_err(|source| StartupError::DataDir {
        path: dir.display().to_string(),
        source,
    })?;
    let dicom_dir = dir.join("dicom");
    demo::write_cohort_fixtures(&dicom_dir).map_err(seed_error)?;
    repo.ingest_directory(&dicom_dir)
        .map_err(|e| seed_error(DemoError::Repository(e)))?;
    demo::seed_annotations(&mut repo, &clock).map_err(seed_error)?;
    Ok(())
}

/// Opens the configured data directory, seeding it first when it is fresh
/// and a demo seed is configured.
pub fn open_repository(config: &Config) -> Result<Repository, StartupError> {
    let dir = &config.data_dir;
    if let Some(seed) = config.demo_seed {
        if Repository::is_fresh_dir(dir) {
            tracing::info!(dir = %dir.display(), seed, "seeding demo cohort");
            seed_data_dir(dir, seed)?;
        }
    }
    Repository::open(dir, OffsetClock::for_config(config), RandomIds).map_err(|source| StartupError::DataDir {
        path: dir.display().to_string(),
        source,
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Event {
    pub seq: u64,
    pub session_id: String,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub body: Value,
}

pub struct Session {
    pub id: String,
    pub state: tokio::sync::Mutex<DialogueState>,
    events: broadcast::Sender<String>,
    history: Mutex<(u64, VecDeque<String>)>,
    last_seen: Mutex<Instant>,
}

impl Session {
    fn new(id: String) -> Self {
        Session {
            state: tokio::sync::Mutex::new(DialogueState::new(id.clone())),
            id,
            events: broadcast::channel(EVENT_BUFFER).0,
            history: Mutex::new((0, VecDeque::new())),
            last_seen: Mutex::new(Instant::now()),
        }
    }

    fn touch(&self) {
        *self.last_seen.lock().unwrap() = Instant::now();
    }

    fn idle_for(&self) -> Duration {
        self.last_seen.lock().unwrap().elapsed()
    }

    pub fn subscribers(&self) -> usize {
        self.events.receiver_count()
    }

    /// Appends an event to the history and fans it out. Never blocks on
    /// slow subscribers; they observe a lag marker instead.
    pub fn publish(&self, kind: &'static str, at: DateTime<Utc>, body: Value) {
        let mut history = self.history.lock().unwrap();
        history.0 += 1;
        let event = Event {
            seq: history.0,
            session_id: self.id.clone(),
            kind,
            at,
            body,
        };
        let line = serde_json::to_string(&event).expect("events serialize");
        history.1.push_back(line.clone());
        while history.1.len() > EVENT_HISTORY {
            history.1.pop_front();
        }
        let _ = self.events.send(line);
    }

    /// Past events plus a receiver for later ones, taken atomically so no
    /// event is lost or repeated.
    pub fn subscribe(&self) -> (Vec<String>, broadcast::Receiver<String>) {
        let history = self.history.lock().unwrap();
        (history.1.iter().cloned().collect(), self.events.subscribe())
    }

    pub fn publish_response(&self, at: DateTime<Utc>, response: &SystemResponse) {
        for directive in &response.directives {
            self.publish("directive", at, json!({ "directive": directive }));
        }
        self.publish(
            "speak",
            at,
            json!({ "speakText": response.speak_text, "intent": response.intent }),
        );
    }
}

pub struct App {
    pub repo: RwLock<Repository>,
    pub manager: DialogueManager,
    pub config: Config,
    clock_offset: chrono::Duration,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

impl App {
    pub fn new(repo: Repository, config: Config) -> Self {
        let mut manager = DialogueManager::bundled();
        manager.params = config.rank_params();
        manager.fusion_window = chrono::Duration::seconds(i64::from(config.fusion_window_seconds));
        App {
            repo: RwLock::new(repo),
            manager,
            clock_offset: OffsetClock::for_config(&config).offset,
            config,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn rank_params(&self) -> &RankParams {
        &self.manager.params
    }

    /// The session for `id`, created on first use; a fresh id when absent.
    pub fn session(&self, id: Option<&str>) -> Arc<Session> {
        let id = id
            .filter(|s| !s.is_empty())
            .map_or_else(|| uuid::Uuid::new_v4().to_string(), str::to_string);
        let mut sessions = self.sessions.lock().unwrap();
        let session = sessions
            .entry(id.clone())
            .or_insert_with(|| Arc::new(Session::new(id)))
            .clone();
        session.touch();
        session
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Drops sessions idle for longer than the TTL that nobody listens to.
    pub fn expire_sessions(&self) -> usize {
        let ttl = Duration::from_secs(self.config.session_ttl_seconds);
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| s.subscribers() > 0 || s.idle_for() <= ttl);
        before - sessions.len()
    }

    /// One dialogue turn. Turns of a session run one at a time; the
    /// repository is locked for writing only while the turn executes.
    pub async fn turn(&self, session: &Session, text: &str, pointing: Vec<PointingEvent>) -> Result<SystemResponse, ()> {
        let pointing: Vec<PointingEvent> = pointing
            .into_iter()
            .map(|mut g| {
                g.timestamp += self.clock_offset;
                g
            })
            .collect();
        let mut state = session.state.lock().await;
        let (outcome, now) = {
            let mut repo = self.repo.write().unwrap_or_else(|e| e.into_inner());
            let now = repo.now();
            let outcome = catch_unwind(AssertUnwindSafe(|| {
                self.manager.turn(&mut repo, &mut state, text, &pointing)
            }));
            (outcome, now)
        };
        session.touch();
        match outcome {
            Ok(response) => {
                session.publish_response(now, &response);
                Ok(response)
            }
            Err(_) => {
                tracing::error!(session = %session.id, "dialogue turn panicked");
                session.publish("speak", now, json!({ "speakText": APOLOGY, "intent": null }));
                Err(())
            }
        }
    }
}

impl Config {
    pub fn rank_params(&self) -> RankParams {
        RankParams {
            lambda: self.lambda,
            max_depth: self.expansion_depth,
            ..RankParams::default()
        }
    }
}
