use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use autoviz::progress::{ProgressEvent, ProgressSink};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

/// Pipeline stages in the order a visualization passes through them,
/// followed by the follow-up operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    Goals,
    Generate,
    Execute,
    Filter,
    Refine,
    Explain,
    Evaluate,
    Repair,
    Recommend,
    Infographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Started,
    Progress,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEvent {
    pub seq: u64,
    pub stage: Stage,
    pub status: StageStatus,
    pub payload: Value,
}

const BACKLOG_CAP: usize = 1024;
const CHANNEL_CAP: usize = 256;

type Listener = Box<dyn Fn(&ServerEvent) + Send + Sync>;

struct LogState {
    next_seq: u64,
    backlog: VecDeque<ServerEvent>,
}

/// Ordered event stream of one session. Late subscribers first receive the
/// retained backlog, then live events, with no gap in between.
pub struct EventLog {
    state: Mutex<LogState>,
    tx: broadcast::Sender<ServerEvent>,
    listener: Option<Listener>,
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLog {
    pub fn new() -> Self {
        let (tx, _) = broadcast::channel(CHANNEL_CAP);
        Self { state: Mutex::new(LogState { next_seq: 0, backlog: VecDeque::new() }), tx, listener: None }
    }

    /// Also calls `listener` for every event, e.g. to print progress.
    pub fn with_listener(listener: impl Fn(&ServerEvent) + Send + Sync + 'static) -> Self {
        Self { listener: Some(Box::new(listener)), ..Self::new() }
    }

    pub fn emit(&self, stage: Stage, status: StageStatus, payload: Value) -> ServerEvent {
        let mut state = self.state.lock().expect("event log lock");
        let event = ServerEvent { seq: state.next_seq, stage, status, payload };
        state.next_seq += 1;
        if state.backlog.len() == BACKLOG_CAP {
            state.backlog.pop_front();
        }
        state.backlog.push_back(event.clone());
        let _ = self.tx.send(event.clone());
        if let Some(listener) = &self.listener {
            listener(&event);
        }
        event
    }

    pub fn backlog(&self) -> Vec<ServerEvent> {
        self.state.lock().expect("event log lock").backlog.iter().cloned().collect()
    }

    pub fn subscribe(&self) -> (Vec<ServerEvent>, broadcast::Receiver<ServerEvent>) {
        let state = self.state.lock().expect("event log lock");
        (state.backlog.iter().cloned().collect(), self.tx.subscribe())
    }

    /// Runs `f` between a started and a completed/failed event.
    pub fn stage<T, E: std::fmt::Display>(
        &self,
        stage: Stage,
        payload: Value,
        f: impl FnOnce() -> Result<T, E>,
        done: impl FnOnce(&T) -> Value,
    ) -> Result<T, E> {
        self.emit(stage, StageStatus::Started, payload);
        match f() {
            Ok(value) => {
                self.emit(stage, StageStatus::Completed, done(&value));
                Ok(value)
            }
            Err(e) => {
                self.emit(stage, StageStatus::Failed, json!({ "message": e.to_string() }));
                Err(e)
            }
        }
    }
}

/// Adapts generator progress to session events.
pub struct StageSink(pub Arc<EventLog>);

impl ProgressSink for StageSink {
    fn emit(&self, event: ProgressEvent) {
        match event {
            ProgressEvent::Stage { stage, message } => {
                let (stage, status) = match stage.as_str() {
                    "codegen" => (Stage::Generate, StageStatus::Progress),
                    "execute" => (Stage::Execute, StageStatus::Started),
                    "selected" => (Stage::Filter, StageStatus::Completed),
                    _ => (Stage::Generate, StageStatus::Progress),
                };
                self.0.emit(stage, status, json!({ "message": message }));
            }
            ProgressEvent::Candidate { candidate_index, status, detail } => {
                self.0.emit(
                    Stage::Execute,
                    StageStatus::Progress,
                    json!({ "candidate_index": candidate_index, "status": status, "detail": detail }),
                );
            }
        }
    }
}
