use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use autoviz::ops::{EvaluationReport, Explanation, RefinementSession};
use autoviz::summary::{DatasetSummary, SummaryCondition};
use autoviz::vis::{CandidateProgram, VisGenerator};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, ErrorKind};
use crate::events::EventLog;
use crate::pipeline::{DatasetView, GoalsView, InfographicView, SummaryView, VisualizationView};

const SNAPSHOT_FILE: &str = "session.json";

/// One generated chart and everything done to it since.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visualization {
    pub view: VisualizationView,
    pub refinement: RefinementSession,
    #[serde(default)]
    pub evaluation: Option<EvaluationReport>,
    #[serde(default)]
    pub explanation: Option<Explanation>,
    #[serde(default)]
    pub infographics: Vec<InfographicView>,
}

impl Visualization {
    pub fn current(&self) -> &CandidateProgram {
        &self.refinement.current
    }

    /// The view with the current candidate in place of the original one.
    pub fn current_view(&self) -> VisualizationView {
        VisualizationView { candidate: self.refinement.current.clone(), ..self.view.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
    pub dataset_path: PathBuf,
    pub dataset: DatasetView,
    pub base_summary: DatasetSummary,
    pub summary: SummaryView,
    pub goals: GoalsView,
    pub visualizations: Vec<Visualization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizationBrief {
    pub visualization_index: usize,
    pub goal: String,
    pub grammar_id: String,
    pub status: autoviz::vis::CandidateStatus,
    pub turns: usize,
    pub sevq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
    pub dataset: DatasetView,
    pub condition: SummaryCondition,
    pub goals: GoalsView,
    pub visualizations: Vec<VisualizationBrief>,
}

impl Session {
    pub fn overview(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            created_at: self.created_at,
            last_active: self.last_active,
            dataset: self.dataset.clone(),
            condition: self.summary.condition,
            goals: self.goals.clone(),
            visualizations: self
                .visualizations
                .iter()
                .map(|v| VisualizationBrief {
                    visualization_index: v.view.visualization_index,
                    goal: v.view.goal.visualization.clone(),
                    grammar_id: v.view.grammar_id.clone(),
                    status: v.current().status,
                    turns: v.refinement.turns.len(),
                    sevq: v.evaluation.as_ref().map(|r| r.sevq),
                })
                .collect(),
        }
    }

    pub fn visualization(&self, k: usize) -> Result<&Visualization, AppError> {
        self.visualizations.get(k).ok_or_else(|| unknown_visualization(k))
    }

    pub fn visualization_mut(&mut self, k: usize) -> Result<&mut Visualization, AppError> {
        self.visualizations.get_mut(k).ok_or_else(|| unknown_visualization(k))
    }
}

fn unknown_visualization(k: usize) -> AppError {
    AppError::not_found("unknown_visualization", format!("no visualization {k}"))
}

/// Live state of one session. Mutations take the async mutex; refinement
/// additionally holds the busy flag so a second refinement is refused
/// instead of queued.
pub struct SessionHandle {
    pub id: String,
    pub dir: PathBuf,
    pub events: Arc<EventLog>,
    pub generator: VisGenerator,
    state: tokio::sync::Mutex<Session>,
    refining: AtomicBool,
    last_seen: Mutex<Instant>,
}

/// Clears the busy flag on drop.
pub struct RefineGuard(Arc<SessionHandle>);

impl Drop for RefineGuard {
    fn drop(&mut self) {
        self.0.refining.store(false, Ordering::SeqCst);
    }
}

impl SessionHandle {
    pub fn new(session: Session, dir: PathBuf, events: Arc<EventLog>, generator: VisGenerator) -> Self {
        Self {
            id: session.id.clone(),
            dir,
            events,
            generator,
            state: tokio::sync::Mutex::new(session),
            refining: AtomicBool::new(false),
            last_seen: Mutex::new(Instant::now()),
        }
    }

    pub async fn lock(&self) -> tokio::sync::MutexGuard<'_, Session> {
        let mut guard = self.state.lock().await;
        guard.last_active = Utc::now();
        guard
    }

    pub fn try_begin_refine(self: &Arc<Self>) -> Result<RefineGuard, AppError> {
        if self.refining.swap(true, Ordering::SeqCst) {
            return Err(AppError::new(
                ErrorKind::Conflict,
                "refinement_in_progress",
                "another refinement is running on this session",
            ));
        }
        Ok(RefineGuard(self.clone()))
    }

    fn touch(&self) {
        *self.last_seen.lock().expect("clock lock") = Instant::now();
    }

    fn idle(&self) -> Duration {
        self.last_seen.lock().expect("clock lock").elapsed()
    }

    /// Path below the session directory as a URL under `/artifacts`.
    pub fn artifact_url(&self, path: &Path) -> Option<String> {
        let rel = path.strip_prefix(&self.dir).ok()?;
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        Some(format!("/artifacts/{}/{}", self.id, parts.join("/")))
    }

    pub fn save_snapshot(&self, session: &Session) -> Result<(), AppError> {
        let text = serde_json::to_string_pretty(session).map_err(|e| AppError::internal(e.to_string()))?;
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }
}

/// In-memory sessions with idle expiry and optional JSON snapshots.
pub struct SessionStore {
    root: PathBuf,
    ttl: Duration,
    persist: bool,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>, ttl: Duration, persist: bool) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root, ttl, persist, sessions: RwLock::new(HashMap::new()) })
    }

    pub fn persist(&self) -> bool {
        self.persist
    }

    pub fn new_id() -> String {
        uuid::Uuid::new_v4().simple().to_string()
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn insert(&self, handle: Arc<SessionHandle>) {
        self.sessions.write().expect("store lock").insert(handle.id.clone(), handle);
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Looks up a live session and marks it active. Expired sessions are
    /// dropped on the spot.
    pub fn get(&self, id: &str) -> Result<Arc<SessionHandle>, AppError> {
        let handle = self.sessions.read().expect("store lock").get(id).cloned();
        let handle = handle.ok_or_else(|| AppError::not_found("unknown_session", format!("no session {id}")))?;
        if handle.idle() > self.ttl {
            self.remove(id);
            return Err(AppError::not_found("session_expired", format!("session {id} expired")));
        }
        handle.touch();
        Ok(handle)
    }

    fn remove(&self, id: &str) {
        let removed = self.sessions.write().expect("store lock").remove(id);
        if removed.is_some() && !self.persist {
            let _ = std::fs::remove_dir_all(self.session_dir(id));
        }
    }

    /// Drops every expired session; returns how many.
    pub fn sweep(&self) -> usize {
        let expired: Vec<String> = self
            .sessions
            .read()
            .expect("store lock")
            .values()
            .filter(|h| h.idle() > self.ttl)
            .map(|h| h.id.clone())
            .collect();
        for id in &expired {
            self.remove(id);
        }
        expired.len()
    }

    /// Loads snapshots written by earlier runs. `generator_for` builds the
    /// generator of a session directory.
    pub fn restore(&self, generator_for: impl Fn(&Path) -> std::io::Result<VisGenerator>) -> usize {
        let Ok(entries) = std::fs::read_dir(&self.root) else { return 0 };
        let mut restored = 0;
        for entry in entries.flatten() {
            let dir = entry.path();
            let Ok(text) = std::fs::read_to_string(dir.join(SNAPSHOT_FILE)) else { continue };
            let session: Session = match serde_json::from_str(&text) {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!(dir = %dir.display(), "skipping unreadable snapshot: {e}");
                    continue;
                }
            };
            let Ok(generator) = generator_for(&dir) else { continue };
            self.insert(Arc::new(SessionHandle::new(session, dir, Arc::new(EventLog::new()), generator)));
            restored += 1;
        }
        restored
    }
}
