use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};

use autoviz::infographer::{StyleEntry, StyleLibrary};
use autoviz::ops::{RefinementSession, DEFAULT_REPAIR_DEPTH};
use autoviz::summary::{apply_user_refinement, SummaryCondition, SummaryEdits};
use autoviz::vis::{ExecutionMode, Executor, FilterPolicy, ScaffoldLibrary, VisGenerator};
use axum::body::Bytes;
use axum::extract::multipart::{Multipart, MultipartError};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::config::ServiceConfig;
use crate::error::{AppError, ErrorKind};
use crate::events::EventLog;
use crate::pipeline::{
    self, GoalChoice, GoalsView, InfographicOptions, InfographicView, RefineView, RepairView, SummaryView, UploadView,
    VisualizationView, VisualizeInput, DEFAULT_GRAMMAR,
};
use crate::providers::Providers;
use crate::session::{Session, SessionHandle, SessionStore, SessionView, Visualization};

pub struct AppState {
    pub config: ServiceConfig,
    pub providers: Providers,
    pub library: Arc<ScaffoldLibrary>,
    pub store: SessionStore,
    styles: RwLock<StyleLibrary>,
}

impl AppState {
    pub fn new(config: ServiceConfig, providers: Providers) -> Result<Arc<Self>, AppError> {
        config.validate()?;
        let styles = match &config.styles_path {
            Some(path) if path.is_file() => StyleLibrary::load(path)?,
            _ => StyleLibrary::bundled(),
        };
        let store = SessionStore::new(config.data_dir.join("sessions"), config.session_ttl(), config.persist_sessions)?;
        let state = Arc::new(Self {
            library: Arc::new(ScaffoldLibrary::bundled()),
            providers,
            store,
            styles: RwLock::new(styles),
            config,
        });
        if state.config.persist_sessions {
            let n = state.store.restore(|dir| state.generator_for(dir));
            tracing::info!(sessions = n, "restored session snapshots");
        }
        Ok(state)
    }

    fn generator_for(&self, dir: &FsPath) -> std::io::Result<VisGenerator> {
        let executor = Executor::new(dir.join("runs"))?.with_limits(self.config.exec_limits());
        Ok(VisGenerator::new(self.library.clone(), Arc::new(executor)))
    }

    pub fn styles(&self) -> StyleLibrary {
        self.styles.read().expect("styles lock").clone()
    }

    fn persist(&self, handle: &SessionHandle, session: &Session) -> Result<(), AppError> {
        if self.store.persist() {
            handle.save_snapshot(session)?;
        }
        Ok(())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cap = state.config.upload_cap_bytes;
    let vis = "/sessions/{id}/visualizations/{k}";
    Router::new()
        .route("/health", get(health))
        .route("/grammars", get(grammars))
        .route("/styles", get(list_styles))
        .route("/styles/{style_id}", put(put_style).delete(delete_style))
        .route("/datasets", post(upload).layer(DefaultBodyLimit::max(cap.saturating_add(64 * 1024))))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/summary", get(get_summary))
        .route("/sessions/{id}/summary/refine", post(refine_summary))
        .route("/sessions/{id}/goals", get(get_goals))
        .route("/sessions/{id}/visualize", post(visualize))
        .route("/sessions/{id}/events", get(events))
        .route(vis, get(get_visualization))
        .route(&format!("{vis}/refine"), post(refine_visualization))
        .route(&format!("{vis}/explain"), post(explain_visualization))
        .route(&format!("{vis}/evaluate"), post(evaluate_visualization))
        .route(&format!("{vis}/repair"), post(repair_visualization))
        .route(&format!("{vis}/recommend"), post(recommend_goals))
        .route(&format!("{vis}/infographic"), post(infographic))
        .route("/artifacts/{id}/{*path}", get(artifact))
        .with_state(state)
}

/// Removes expired sessions every `period` until the runtime stops.
pub fn spawn_sweeper(state: Arc<AppState>, period: std::time::Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(period);
        loop {
            ticker.tick().await;
            let n = state.store.sweep();
            if n > 0 {
                tracing::info!(expired = n, "swept sessions");
            }
        }
    })
}

type ApiResult<T> = Result<Json<T>, AppError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, AppError> + Send + 'static) -> Result<T, AppError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| AppError::internal(format!("worker failed: {e}")))?
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "provider": app.providers.name(), "sessions": app.store.len() }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GrammarInfo {
    pub grammar_id: String,
    pub language_id: String,
    pub execution_mode: ExecutionMode,
}

async fn grammars(State(app): State<Arc<AppState>>) -> Json<Vec<GrammarInfo>> {
    Json(
        app.library
            .iter()
            .map(|s| GrammarInfo {
                grammar_id: s.grammar_id.clone(),
                language_id: s.language_id.clone(),
                execution_mode: s.execution_mode,
            })
            .collect(),
    )
}

async fn list_styles(State(app): State<Arc<AppState>>) -> Json<Vec<StyleEntry>> {
    Json(app.styles().entries().to_vec())
}

#[derive(Debug, Deserialize)]
struct StyleBody {
    prompt: String,
    #[serde(default)]
    tags: Vec<String>,
}

fn save_styles(app: &AppState, library: &StyleLibrary) -> Result<(), AppError> {
    if let Some(path) = &app.config.styles_path {
        library.save(path)?;
    }
    Ok(())
}

async fn put_style(
    State(app): State<Arc<AppState>>,
    Path(style_id): Path<String>,
    Json(body): Json<StyleBody>,
) -> ApiResult<StyleEntry> {
    let entry = StyleEntry { id: style_id, prompt: body.prompt, tags: body.tags };
    let mut library = app.styles.write().expect("styles lock");
    library.upsert(entry.clone())?;
    save_styles(&app, &library)?;
    Ok(Json(entry))
}

async fn delete_style(State(app): State<Arc<AppState>>, Path(style_id): Path<String>) -> Result<StatusCode, AppError> {
    let mut library = app.styles.write().expect("styles lock");
    if !library.remove(&style_id) {
        return Err(AppError::not_found("unknown_style", format!("no style {style_id:?}")));
    }
    save_styles(&app, &library)?;
    Ok(StatusCode::NO_CONTENT)
}

fn multipart_error(e: MultipartError) -> AppError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        AppError::new(ErrorKind::PayloadTooLarge, "upload_too_large", e.body_text())
    } else {
        AppError::validation("bad_multipart", e.body_text())
    }
}

/// Keeps the last path component and only portable characters.
fn sanitize_file_name(raw: &str) -> Option<String> {
    let last = raw.rsplit(['/', '\\']).next()?;
    let clean: String = last.chars().filter(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')).collect();
    let clean = clean.trim_start_matches('.').to_string();
    (!clean.is_empty()).then_some(clean)
}

struct UploadForm {
    file_name: String,
    bytes: Bytes,
    condition: SummaryCondition,
    n_goals: usize,
    persona: Option<String>,
}

async fn read_upload(app: &AppState, mut multipart: Multipart) -> Result<UploadForm, AppError> {
    let mut file = None;
    let mut condition = app.config.pipeline.condition;
    let mut n_goals = app.config.pipeline.n_goals;
    let mut persona = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "file" => {
                let file_name = field.file_name().and_then(sanitize_file_name).unwrap_or_else(|| "dataset.csv".into());
                let bytes = field.bytes().await.map_err(multipart_error)?;
                file = Some((file_name, bytes));
            }
            "condition" => {
                let text = field.text().await.map_err(multipart_error)?;
                condition = text.trim().parse().map_err(|e: String| AppError::validation("invalid_condition", e))?;
            }
            "n_goals" => {
                let text = field.text().await.map_err(multipart_error)?;
                n_goals = text.trim().parse().map_err(|_| {
                    AppError::validation("invalid_goal_count", format!("n_goals {text:?} is not a count"))
                })?;
            }
            "persona" => persona = Some(field.text().await.map_err(multipart_error)?),
            _ => {}
        }
    }
    let (file_name, bytes) =
        file.ok_or_else(|| AppError::validation("missing_file", "multipart field \"file\" is required"))?;
    if bytes.len() > app.config.upload_cap_bytes {
        return Err(AppError::new(
            ErrorKind::PayloadTooLarge,
            "upload_too_large",
            format!("upload of {} bytes exceeds the {} byte cap", bytes.len(), app.config.upload_cap_bytes),
        ));
    }
    let ext = FsPath::new(&file_name).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if !matches!(ext.as_deref(), Some("csv" | "json")) {
        return Err(AppError::validation("unsupported_format", "datasets must be .csv or .json files"));
    }
    if n_goals == 0 {
        return Err(AppError::validation("invalid_goal_count", "n_goals must be at least 1"));
    }
    Ok(UploadForm { file_name, bytes, condition, n_goals, persona })
}

/// Stores the file, then summarizes and explores goals. The session only
/// becomes visible once both succeeded.
async fn upload(State(app): State<Arc<AppState>>, multipart: Multipart) -> ApiResult<UploadView> {
    let form = read_upload(&app, multipart).await?;
    let id = SessionStore::new_id();
    let dir = app.store.session_dir(&id);
    let events = Arc::new(EventLog::new());
    let built = {
        let (app, dir, events, id) = (app.clone(), dir.clone(), events.clone(), id.clone());
        blocking(move || {
            let data_path = dir.join("data").join(&form.file_name);
            std::fs::create_dir_all(data_path.parent().expect("data dir"))?;
            std::fs::write(&data_path, &form.bytes)?;
            let settings = &app.config.pipeline;
            let provider = app.providers.text.as_ref();
            let (dataset, base) = pipeline::load_dataset(&data_path, settings)?;
            app.providers.observe(&base);
            let summary = pipeline::summarize(&base, form.condition, provider, &settings.generation, &events)?;
            let goals = pipeline::explore(
                &summary.summary,
                form.condition,
                form.n_goals,
                form.persona.as_deref(),
                provider,
                &settings.generation,
                &events,
            )?;
            let generator = app.generator_for(&dir)?;
            let now = Utc::now();
            let session = Session {
                id,
                created_at: now,
                last_active: now,
                dataset_path: data_path,
                dataset,
                base_summary: base,
                summary,
                goals,
                visualizations: Vec::new(),
            };
            Ok((session, generator))
        })
        .await
    };
    let (session, generator) = match built {
        Ok(b) => b,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&dir);
            return Err(e);
        }
    };
    let view = UploadView {
        session_id: id,
        dataset: session.dataset.clone(),
        summary: session.summary.clone(),
        goals: session.goals.clone(),
    };
    let handle = Arc::new(SessionHandle::new(session.clone(), dir, events, generator));
    app.persist(&handle, &session)?;
    app.store.insert(handle);
    Ok(Json(view))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let handle = app.store.get(&id)?;
    let session = handle.lock().await;
    Ok(Json(session.overview()))
}

async fn get_summary(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SummaryView> {
    let handle = app.store.get(&id)?;
    let session = handle.lock().await;
    Ok(Json(session.summary.clone()))
}

async fn get_goals(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<GoalsView> {
    let handle = app.store.get(&id)?;
    let session = handle.lock().await;
    Ok(Json(session.goals.clone()))
}

async fn refine_summary(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(edits): Json<SummaryEdits>,
) -> ApiResult<SummaryView> {
    let handle = app.store.get(&id)?;
    let mut session = handle.lock().await;
    let refined = apply_user_refinement(&session.summary.summary, &edits)?;
    let view = SummaryView::new(refined, session.summary.condition, session.summary.warnings.clone());
    session.summary = view.clone();
    app.persist(&handle, &session)?;
    Ok(Json(view))
}

#[derive(Debug, Default, Deserialize)]
struct VisualizeBody {
    goal_index: Option<usize>,
    nl_goal: Option<String>,
    grammar_id: Option<String>,
    policy: Option<FilterPolicy>,
    n_candidates: Option<u32>,
    condition: Option<SummaryCondition>,
}

async fn visualize(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<VisualizeBody>,
) -> ApiResult<VisualizationView> {
    let choice = GoalChoice::from_parts(body.goal_index, body.nl_goal)?;
    let mut policy = body.policy.unwrap_or_default();
    if let Some(n) = body.n_candidates {
        policy.n_candidates = n;
    }
    let grammar_id = body.grammar_id.unwrap_or_else(|| DEFAULT_GRAMMAR.to_string());
    let handle = app.store.get(&id)?;
    let mut session = handle.lock().await;
    let goal = choice.resolve(&session.goals.goals)?;
    let condition = body.condition.unwrap_or(session.summary.condition);
    let summary = session.summary.summary.clone();
    let mut view = {
        let (app, handle) = (app.clone(), handle.clone());
        blocking(move || {
            let input = VisualizeInput { summary: &summary, condition, goal, grammar_id: &grammar_id, policy };
            pipeline::visualize(
                &handle.generator,
                input,
                app.providers.text.as_ref(),
                &app.config.pipeline.generation,
                &handle.events,
            )
        })
        .await?
    };
    view.visualization_index = session.visualizations.len();
    view.artifact_url = view.candidate.artifact.as_ref().and_then(|a| handle.artifact_url(a.path()));
    let refinement =
        RefinementSession::new(view.goal.clone(), session.summary.summary.name.clone(), view.candidate.clone())?;
    session.visualizations.push(Visualization {
        view: view.clone(),
        refinement,
        evaluation: None,
        explanation: None,
        infographics: Vec::new(),
    });
    app.persist(&handle, &session)?;
    Ok(Json(view))
}

async fn get_visualization(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
) -> ApiResult<VisualizationView> {
    let handle = app.store.get(&id)?;
    let session = handle.lock().await;
    let mut view = session.visualization(k)?.current_view();
    view.artifact_url = view.candidate.artifact.as_ref().and_then(|a| handle.artifact_url(a.path()));
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
struct RefineBody {
    instruction: String,
}

async fn refine_visualization(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
    Json(body): Json<RefineBody>,
) -> ApiResult<RefineView> {
    let handle = app.store.get(&id)?;
    let _busy = handle.try_begin_refine()?;
    let mut session = handle.lock().await;
    let mut refinement = session.visualization(k)?.refinement.clone();
    let summary = session.summary.summary.clone();
    let (result, refinement) = {
        let (app, handle) = (app.clone(), handle.clone());
        blocking(move || {
            let result = pipeline::refine_step(
                &handle.generator,
                &summary,
                &mut refinement,
                &body.instruction,
                app.providers.text.as_ref(),
                &app.config.pipeline.generation,
                &handle.events,
            );
            Ok((result, refinement))
        })
        .await?
    };
    let vis = session.visualization_mut(k)?;
    if vis.refinement.current != refinement.current {
        vis.evaluation = None;
        vis.explanation = None;
    }
    vis.refinement = refinement;
    app.persist(&handle, &session)?;
    let mut view = result?;
    view.artifact_url = view.candidate.artifact.as_ref().and_then(|a| handle.artifact_url(a.path()));
    Ok(Json(view))
}

async fn explain_visualization(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
) -> ApiResult<autoviz::ops::Explanation> {
    let handle = app.store.get(&id)?;
    let mut session = handle.lock().await;
    let code = session.visualization(k)?.current().assembled_code.clone();
    let dataset = session.summary.summary.name.clone();
    let explanation = {
        let (app, handle) = (app.clone(), handle.clone());
        blocking(move || {
            pipeline::explain_step(
                &code,
                &dataset,
                app.providers.text.as_ref(),
                &app.config.pipeline.generation,
                &handle.events,
            )
        })
        .await?
    };
    session.visualization_mut(k)?.explanation = Some(explanation.clone());
    app.persist(&handle, &session)?;
    Ok(Json(explanation))
}

async fn evaluate_visualization(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
) -> ApiResult<autoviz::ops::EvaluationReport> {
    let handle = app.store.get(&id)?;
    let mut session = handle.lock().await;
    let vis = session.visualization(k)?;
    let (code, goal) = (vis.current().assembled_code.clone(), vis.view.goal.clone());
    let dataset = session.summary.summary.name.clone();
    let report = {
        let (app, handle) = (app.clone(), handle.clone());
        blocking(move || {
            pipeline::evaluate_step(
                &code,
                &goal,
                &dataset,
                app.providers.text.as_ref(),
                &app.config.pipeline.generation,
                &handle.events,
            )
        })
        .await?
    };
    session.visualization_mut(k)?.evaluation = Some(report.clone());
    app.persist(&handle, &session)?;
    Ok(Json(report))
}

#[derive(Debug, Default, Deserialize)]
struct RepairBody {
    depth: Option<u32>,
}

async fn repair_visualization(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
    body: Option<Json<RepairBody>>,
) -> ApiResult<RepairView> {
    let depth = body.and_then(|b| b.0.depth).unwrap_or(DEFAULT_REPAIR_DEPTH);
    let handle = app.store.get(&id)?;
    let mut session = handle.lock().await;
    let vis = session.visualization(k)?;
    let (candidate, goal, evaluation) = (vis.current().clone(), vis.view.goal.clone(), vis.evaluation.clone());
    let summary = session.summary.summary.clone();
    let mut view = {
        let (app, handle) = (app.clone(), handle.clone());
        blocking(move || {
            pipeline::repair_step(
                &handle.generator,
                &summary,
                &candidate,
                &goal,
                evaluation,
                depth,
                app.providers.text.as_ref(),
                &app.config.pipeline.generation,
                &handle.events,
            )
        })
        .await?
    };
    let vis = session.visualization_mut(k)?;
    if view.candidate != vis.refinement.current {
        vis.refinement.current = view.candidate.clone();
        vis.evaluation = None;
    } else {
        vis.evaluation = Some(view.evaluation.clone());
    }
    app.persist(&handle, &session)?;
    view.artifact_url = view.candidate.artifact.as_ref().and_then(|a| handle.artifact_url(a.path()));
    Ok(Json(view))
}

#[derive(Debug, Default, Deserialize)]
struct RecommendBody {
    k: Option<usize>,
}

async fn recommend_goals(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
    body: Option<Json<RecommendBody>>,
) -> ApiResult<GoalsView> {
    let count = body.and_then(|b| b.0.k).unwrap_or(3);
    let handle = app.store.get(&id)?;
    let session = handle.lock().await;
    let goal = session.visualization(k)?.view.goal.clone();
    let summary = session.summary.summary.clone();
    let (app, handle) = (app.clone(), handle.clone());
    let view = blocking(move || {
        pipeline::recommend_step(
            &summary,
            &goal,
            count,
            app.providers.text.as_ref(),
            &app.config.pipeline.generation,
            &handle.events,
        )
    })
    .await?;
    Ok(Json(view))
}

async fn infographic(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
    Json(options): Json<InfographicOptions>,
) -> ApiResult<InfographicView> {
    let handle = app.store.get(&id)?;
    let mut session = handle.lock().await;
    let vis = session.visualization(k)?;
    let candidate = vis.current().clone();
    let out = handle.dir.join("infographics").join(format!("{k}-{}.png", vis.infographics.len()));
    let styles = app.styles();
    let mut view = {
        let (app, handle) = (app.clone(), handle.clone());
        blocking(move || {
            pipeline::infographic_step(
                &candidate,
                &styles,
                &options,
                app.providers.image.as_ref(),
                &out,
                &handle.events,
            )
        })
        .await?
    };
    view.artifact_url = handle.artifact_url(&view.image.path);
    session.visualization_mut(k)?.infographics.push(view.clone());
    app.persist(&handle, &session)?;
    Ok(Json(view))
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("json") => "application/json",
        Some("csv") => "text/csv; charset=utf-8",
        Some("py" | "txt") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

async fn artifact(
    State(app): State<Arc<AppState>>,
    Path((id, rel)): Path<(String, String)>,
) -> Result<Response, AppError> {
    let handle = app.store.get(&id)?;
    let rel = PathBuf::from(&rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(AppError::not_found("unknown_artifact", "artifact paths are relative to the session"));
    }
    let path = handle.dir.join(&rel);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| AppError::not_found("unknown_artifact", format!("no artifact {}", rel.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

async fn events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, AppError> {
    let handle = app.store.get(&id)?;
    Ok(ws.on_upgrade(move |socket| stream_events(socket, handle.events.clone())))
}

async fn stream_events(mut socket: WebSocket, log: Arc<EventLog>) {
    let (backlog, mut rx) = log.subscribe();
    let mut last_seq = None;
    for event in backlog {
        last_seq = Some(event.seq);
        let text = serde_json::to_string(&event).expect("event serializes");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            received = rx.recv() => match received {
                Ok(event) => {
                    if last_seq.is_some_and(|s| event.seq <= s) {
                        continue;
                    }
                    last_seq = Some(event.seq);
                    let text = serde_json::to_string(&event).expect("event serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    let notice = json!({ "lagged": n }).to_string();
                    if socket.send(Message::Text(notice.into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(sanitize_file_name("../../etc/cars.csv").as_deref(), Some("cars.csv"));
        assert_eq!(sanitize_file_name("C:\\data\\my cars.csv").as_deref(), Some("mycars.csv"));
        assert_eq!(sanitize_file_name("..").as_deref(), None);
        assert_eq!(sanitize_file_name(".hidden.csv").as_deref(), Some("hidden.csv"));
    }

    #[test]
    fn content_types_follow_extensions() {
        assert_eq!(content_type(FsPath::new("a/chart.png")), "image/png");
        assert_eq!(content_type(FsPath::new("spec.json")), "application/json");
        assert_eq!(content_type(FsPath::new("blob")), "application/octet-stream");
    }
}
