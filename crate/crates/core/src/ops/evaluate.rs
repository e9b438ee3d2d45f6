//! Six-dimension self-evaluation of visualization code.

use serde::{Deserialize, Serialize};

use super::OpsError;
use crate::goals::Goal;
use crate::llm::{generate, GenerationConfig, Message, PromptRequest, TextProvider};
use crate::text::first_integer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    CodeAccuracy,
    DataTransformation,
    GoalCompliance,
    VisualizationType,
    DataEncoding,
    Aesthetics,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::CodeAccuracy,
        Dimension::DataTransformation,
        Dimension::GoalCompliance,
        Dimension::VisualizationType,
        Dimension::DataEncoding,
        Dimension::Aesthetics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::CodeAccuracy => "code_accuracy",
            Dimension::DataTransformation => "data_transformation",
            Dimension::GoalCompliance => "goal_compliance",
            Dimension::VisualizationType => "visualization_type",
            Dimension::DataEncoding => "data_encoding",
            Dimension::Aesthetics => "aesthetics",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Dimension::CodeAccuracy => "Code accuracy",
            Dimension::DataTransformation => "Data transformation",
            Dimension::GoalCompliance => "Goal compliance",
            Dimension::VisualizationType => "Visualization type",
            Dimension::DataEncoding => "Data encoding",
            Dimension::Aesthetics => "Aesthetics",
        }
    }

    /// The bundled question asked for this dimension.
    pub fn prompt(self) -> &'static str {
        match self {
            Dimension::CodeAccuracy => include_str!("../../resources/sevq/code_accuracy.txt"),
            Dimension::DataTransformation => include_str!("../../resources/sevq/data_transformation.txt"),
            Dimension::GoalCompliance => include_str!("../../resources/sevq/goal_compliance.txt"),
            Dimension::VisualizationType => include_str!("../../resources/sevq/visualization_type.txt"),
            Dimension::DataEncoding => include_str!("../../resources/sevq/data_encoding.txt"),
            Dimension::Aesthetics => include_str!("../../resources/sevq/aesthetics.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub dimension: Dimension,
    pub score: u8,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scores: Vec<DimensionScore>,
    pub sevq: f64,
    /// Dimensions whose reply could not be parsed. A report with missing
    /// dimensions is partial and its `sevq` covers the parsed ones only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<Dimension>,
}

impl EvaluationReport {
    /// Builds a report, computing `sevq` as the mean of `scores`.
    pub fn from_scores(scores: Vec<DimensionScore>, missing: Vec<Dimension>) -> Result<Self, OpsError> {
        if scores.is_empty() {
            return Err(OpsError::EvaluationFailed { missing });
        }
        let sevq = mean_score(&scores);
        Ok(Self { scores, sevq, missing })
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && Dimension::ALL.iter().all(|d| self.score(*d).is_some())
    }

    pub fn score(&self, dimension: Dimension) -> Option<&DimensionScore> {
        self.scores.iter().find(|s| s.dimension == dimension)
    }
}

pub fn mean_score(scores: &[DimensionScore]) -> f64 {
    let total: u32 = scores.iter().map(|s| u32::from(s.score)).sum();
    f64::from(total) / scores.len() as f64
}

const EVAL_SYSTEM: &str = "You are a visualization expert who reviews chart code. You judge one quality \
dimension at a time, score it from 1 (very poor) to 10 (excellent) and justify the score in a few sentences.";

pub fn dimension_prompt(dimension: Dimension, code: &str, goal: &Goal) -> PromptRequest {
    let body = format!(
        "Dimension: {}\nQuestion: {}\n\nVisualization goal: {}\n{}\n\nCode:\n```\n{}\n```\n\n\
Reply in the form `<score>: <rationale>` where <score> is an integer from 1 to 10.",
        dimension.title(),
        dimension.prompt(),
        goal.question,
        goal.visualization,
        code
    );
    PromptRequest::completion(EVAL_SYSTEM, vec![Message::user(body)])
        .with_meta("task", "evaluate")
        .with_meta("dimension", dimension.as_str())
}

/// First integer of the reply; it must lie in 1..=10. The rest of the
/// reply, minus separators, is the rationale.
pub fn parse_dimension_reply(dimension: Dimension, reply: &str) -> Result<DimensionScore, OpsError> {
    let fail = || OpsError::ScoreParseFailure { dimension, reply: reply.to_string() };
    let (value, end) = first_integer(reply).ok_or_else(fail)?;
    if !(1..=10).contains(&value) {
        return Err(fail());
    }
    let rest = reply[end..].trim_start();
    let rest = rest.strip_prefix("/10").unwrap_or(rest);
    let rationale = rest.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ':' | '-' | '.' | ')' | '*'));
    Ok(DimensionScore { dimension, score: value as u8, rationale: rationale.trim().to_string() })
}

/// Issues one provider call per dimension (concurrently) and aggregates
/// the parsed scores.
pub fn evaluate(
    code: &str,
    goal: &Goal,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    dataset: Option<&str>,
) -> Result<EvaluationReport, OpsError> {
    if code.trim().is_empty() {
        return Err(OpsError::EmptyCode);
    }
    let config = GenerationConfig { n_candidates: 1, ..config.clone() };
    let replies: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = Dimension::ALL
            .iter()
            .map(|&d| {
                let mut prompt = dimension_prompt(d, code, goal);
                if let Some(name) = dataset {
                    prompt = prompt.with_meta("dataset", name);
                }
                let config = &config;
                s.spawn(move || (d, generate(provider, &prompt, config)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut scores = Vec::new();
    let mut missing = Vec::new();
    for (d, reply) in replies {
        let reply = reply?;
        match parse_dimension_reply(d, reply.first()) {
            Ok(s) => scores.push(s),
            Err(_) => missing.push(d),
        }
    }
    EvaluationReport::from_scores(scores, missing)
}
