//! Goal exploration: `{question, visualization, rationale}` records grounded
//! in a dataset summary.
//!
//! Field references in the `visualization` text are checked against the
//! summary. References written in backticks (the convention the prompt's
//! few-shot example teaches) must name existing fields; a goal must mention
//! at least one existing field, either in backticks or as a bare token.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{generate, GenerationConfig, Message, PromptRequest, ProviderError, TextProvider};
use crate::summary::{render_summary, DatasetSummary, SummaryCondition};
use crate::text::extract_json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub index: usize,
    pub question: String,
    pub visualization: String,
    pub rationale: String,
}

impl Goal {
    /// Wraps a user-written goal; it bypasses generation and validation.
    pub fn user_provided(index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        Goal { index, question: text.clone(), visualization: text, rationale: "user-provided".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalRequest {
    pub summary_text: String,
    pub n_goals: usize,
    #[serde(default)]
    pub persona_hint: Option<String>,
}

impl GoalRequest {
    pub fn new(summary_text: impl Into<String>, n_goals: usize) -> Self {
        Self { summary_text: summary_text.into(), n_goals, persona_hint: None }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GoalError {
    #[error("reply contains no parsable JSON goal list")]
    NoParsableJson,
    #[error("all {total} goal records were rejected")]
    AllGoalsRejected { total: usize, rejections: Vec<Rejection> },
    #[error("n_goals must be at least 1")]
    InvalidGoalCount,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    Malformed { position: usize, detail: String },
    HallucinatedField { position: usize, field: String },
    Ungrounded { position: usize },
}

/// Accepted goals plus the records that were dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalBatch {
    pub goals: Vec<Goal>,
    pub rejected: Vec<Rejection>,
}

impl GoalBatch {
    pub fn hallucinated_count(&self) -> usize {
        self.rejected.iter().filter(|r| matches!(r, Rejection::HallucinatedField { .. })).count()
    }
}

const GOAL_SYSTEM: &str = "You are an experienced data analyst and visualization specialist. Given a summary of a \
dataset, you propose insightful exploration GOALS, each answered by one visualization. \
The VISUALIZATIONS YOU PROPOSE MUST FOLLOW VISUALIZATION BEST PRACTICES (e.g., use bar charts rather than pie charts \
to compare quantities) AND BE MEANINGFUL (e.g., plot longitude and latitude on maps where appropriate). \
Avoid pie charts. Each goal must use EXACT field names from the summary.";

const GOAL_FEW_SHOT: &str = r#"Example (for a dataset with fields `price`, `sqft` and `city`):
[
  {"question": "What is the relationship between `sqft` and `price`?",
   "visualization": "scatter plot of `sqft` vs `price`",
   "rationale": "A scatter plot of `sqft` against `price` shows whether larger homes cost more, linking the two fields directly."},
  {"question": "How does the average `price` vary across each `city`?",
   "visualization": "bar chart of mean `price` by `city`",
   "rationale": "Grouping `price` by `city` reveals regional differences in the housing market."}
]"#;

pub fn build_goal_prompt(request: &GoalRequest) -> PromptRequest {
    let n = request.n_goals;
    let summary =
        if request.summary_text.is_empty() { "(no summary available)" } else { request.summary_text.as_str() };
    let mut body =
        format!("The number of GOALS to generate is {n}. The goals should be based on the data summary below.\n\n");
    body.push_str("Data summary:\n");
    body.push_str(summary);
    body.push_str("\n\n");
    if let Some(persona) = &request.persona_hint {
        body.push_str(&format!(
            "The generated goals should be focused on the interests and perspective of a {persona}.\n\n"
        ));
    }
    body.push_str(GOAL_FEW_SHOT);
    body.push_str(&format!(
        "\n\nReturn exactly {n} goals as a JSON array of objects with the keys \"question\", \"visualization\" and \
\"rationale\". In the visualization and rationale, wrap every field name in backticks, and only use fields that \
exist in the data summary. Output the JSON array only."
    ));
    PromptRequest::completion(GOAL_SYSTEM, vec![Message::user(body)])
        .with_meta("task", "goals")
        .with_meta("n_goals", n.to_string())
}

/// Lower-cased alphanumeric/underscore tokens.
fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_')).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Whether `name` occurs in `text` as a whole token sequence
/// (case-insensitive).
pub fn mentions_field(text: &str, name: &str) -> bool {
    let hay = tokens(text);
    let needle = tokens(name);
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Backtick-delimited spans in `text`.
pub fn explicit_references(text: &str) -> Vec<String> {
    text.split('`').skip(1).step_by(2).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

/// Validates a visualization text against the summary's fields. Returns
/// the first unknown explicit reference, if any.
fn check_grounding(visualization: &str, summary: &DatasetSummary, position: usize) -> Result<(), Rejection> {
    let known = |r: &str| summary.fields.iter().any(|f| f.name.eq_ignore_ascii_case(r));
    let explicit = explicit_references(visualization);
    if let Some(bad) = explicit.iter().find(|r| !known(r)) {
        return Err(Rejection::HallucinatedField { position, field: bad.clone() });
    }
    let grounded = !explicit.is_empty() || summary.fields.iter().any(|f| mentions_field(visualization, &f.name));
    if grounded {
        Ok(())
    } else {
        Err(Rejection::Ungrounded { position })
    }
}

fn record_text(record: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    record.get(key).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

pub fn parse_goals(raw: &str, summary: &DatasetSummary) -> Result<GoalBatch, GoalError> {
    let doc = extract_json(raw).ok_or(GoalError::NoParsableJson)?;
    let records = match doc {
        Value::Array(items) => items,
        Value::Object(mut map) => match map.remove("goals") {
            Some(Value::Array(items)) => items,
            _ => vec![Value::Object(map)],
        },
        _ => return Err(GoalError::NoParsableJson),
    };
    let total = records.len();
    let mut goals = Vec::new();
    let mut rejected = Vec::new();
    for (position, record) in records.into_iter().enumerate() {
        let Value::Object(record) = record else {
            rejected.push(Rejection::Malformed { position, detail: "not an object".into() });
            continue;
        };
        let fields = (
            record_text(&record, "question"),
            record_text(&record, "visualization"),
            record_text(&record, "rationale"),
        );
        let (Some(question), Some(visualization), Some(rationale)) = fields else {
            let missing: Vec<&str> = ["question", "visualization", "rationale"]
                .into_iter()
                .filter(|k| record_text(&record, k).is_none())
                .collect();
            rejected.push(Rejection::Malformed { position, detail: format!("missing {}", missing.join(", ")) });
            continue;
        };
        if let Err(r) = check_grounding(&visualization, summary, position) {
            rejected.push(r);
            continue;
        }
        goals.push(Goal { index: goals.len(), question, visualization, rationale });
    }
    if goals.is_empty() {
        return Err(GoalError::AllGoalsRejected { total, rejections: rejected });
    }
    if !rejected.is_empty() {
        tracing::debug!(dropped = rejected.len(), "goal records rejected");
    }
    Ok(GoalBatch { goals, rejected })
}

pub fn explore_goals(
    summary: &DatasetSummary,
    condition: SummaryCondition,
    n_goals: usize,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
) -> Result<GoalBatch, GoalError> {
    explore_goals_with(summary, &GoalRequest::new(render_summary(summary, condition), n_goals), provider, config)
}

/// Like [`explore_goals`] with a prepared request (persona hint, custom
/// summary text).
pub fn explore_goals_with(
    summary: &DatasetSummary,
    request: &GoalRequest,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
) -> Result<GoalBatch, GoalError> {
    if request.n_goals == 0 {
        return Err(GoalError::InvalidGoalCount);
    }
    let prompt = build_goal_prompt(request).with_meta("dataset", summary.name.clone());
    let config = GenerationConfig { n_candidates: 1, ..config.clone() };
    let reply = generate(provider, &prompt, &config)?;
    let mut batch = parse_goals(reply.first(), summary)?;
    batch.goals.truncate(request.n_goals);
    Ok(batch)
}
