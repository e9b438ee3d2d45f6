//! Pipeline steps shared by the HTTP handlers and the CLI. Both render the
//! same view types, so a subcommand prints exactly what the matching
//! endpoint returns.

use std::path::Path;
use std::sync::Arc;

use autoviz::goals::{explore_goals_with, Goal, GoalRequest, Rejection};
use autoviz::infographer::{compose_request, stylize, ImageProvider, StyleLibrary, StylizedImage};
use autoviz::llm::{GenerationConfig, TextProvider};
use autoviz::ops::{
    evaluate, explain, recommend, refine, repair, EvaluationReport, ExecContext, Explanation, RecommendContext,
    RefinementSession, RefinementTurn,
};
use autoviz::summary::{
    build_base_summary, enrich_summary, ingest, render_summary, DataFormat, DatasetSummary, SummaryCondition,
    DEFAULT_SAMPLE_N,
};
use autoviz::vis::{Artifact, CandidateProgram, FilterPolicy, VisGenerator, VisRequest};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::AppError;
use crate::events::{EventLog, Stage, StageSink, StageStatus};

pub const DEFAULT_GRAMMAR: &str = "vegalite";
const PREVIEW_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub sample_n: usize,
    pub seed: u64,
    pub n_goals: usize,
    pub condition: SummaryCondition,
    pub generation: GenerationConfig,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            sample_n: DEFAULT_SAMPLE_N,
            seed: 0,
            n_goals: 5,
            condition: SummaryCondition::Enrich,
            generation: GenerationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetView {
    pub name: String,
    pub format: String,
    pub row_count: usize,
    pub columns: Vec<String>,
    pub preview: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryView {
    pub condition: SummaryCondition,
    pub summary: DatasetSummary,
    /// The summary text as the models see it under `condition`.
    pub rendered: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SummaryView {
    pub fn new(summary: DatasetSummary, condition: SummaryCondition, warnings: Vec<String>) -> Self {
        let rendered = render_summary(&summary, condition);
        Self { condition, summary, rendered, warnings }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalsView {
    pub goals: Vec<Goal>,
    #[serde(default)]
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadView {
    pub session_id: String,
    pub dataset: DatasetView,
    pub summary: SummaryView,
    pub goals: GoalsView,
}

/// A generated visualization: the selected candidate plus what went into
/// producing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizationView {
    pub visualization_index: usize,
    #[serde(flatten)]
    pub candidate: CandidateProgram,
    pub goal: Goal,
    pub grammar_id: String,
    pub condition: SummaryCondition,
    pub policy: FilterPolicy,
    pub summary_used: String,
    pub candidates: Vec<CandidateProgram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineView {
    #[serde(flatten)]
    pub turn: RefinementTurn,
    pub turn_count: usize,
    pub candidate: CandidateProgram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairView {
    #[serde(flatten)]
    pub candidate: CandidateProgram,
    pub attempts: Vec<CandidateProgram>,
    pub evaluation: EvaluationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfographicView {
    #[serde(flatten)]
    pub image: StylizedImage,
    pub style_prompt: String,
    pub strength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_url: Option<String>,
}

/// Which goal to visualize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalChoice {
    Index(usize),
    Text(String),
}

impl GoalChoice {
    pub fn from_parts(goal_index: Option<usize>, nl_goal: Option<String>) -> Result<Self, AppError> {
        match (goal_index, nl_goal) {
            (Some(i), None) => Ok(GoalChoice::Index(i)),
            (None, Some(text)) if !text.trim().is_empty() => Ok(GoalChoice::Text(text)),
            (None, Some(_)) => Err(AppError::validation("invalid_goal", "nl_goal is empty")),
            _ => Err(AppError::validation("invalid_goal", "give exactly one of goal_index and nl_goal")),
        }
    }

    pub fn needs_goals(&self) -> bool {
        matches!(self, GoalChoice::Index(_))
    }

    /// User-written goals skip exploration and are wrapped as index 0.
    pub fn resolve(&self, goals: &[Goal]) -> Result<Goal, AppError> {
        match self {
            GoalChoice::Index(i) => goals
                .get(*i)
                .cloned()
                .ok_or_else(|| AppError::not_found("unknown_goal", format!("no goal {i} (have {})", goals.len()))),
            GoalChoice::Text(text) => Ok(Goal::user_provided(0, text.clone())),
        }
    }
}

pub fn load_dataset(path: &Path, settings: &PipelineSettings) -> Result<(DatasetView, DatasetSummary), AppError> {
    let format = DataFormat::from_path(path);
    let table = ingest(path, format)?;
    let summary = build_base_summary(&table, settings.sample_n, settings.seed)?;
    let preview =
        table.preview(PREVIEW_ROWS).into_iter().map(|row| serde_json::to_value(row).unwrap_or(Value::Null)).collect();
    let view = DatasetView {
        name: summary.name.clone(),
        format: format!("{format:?}").to_lowercase(),
        row_count: table.row_count(),
        columns: table.column_names().into_iter().map(String::from).collect(),
        preview,
    };
    Ok((view, summary))
}

/// Enriches `base` when the condition needs the model-written
/// descriptions; otherwise returns it unchanged without a provider call.
pub fn summarize(
    base: &DatasetSummary,
    condition: SummaryCondition,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &EventLog,
) -> Result<SummaryView, AppError> {
    events.stage(
        Stage::Summarize,
        json!({ "dataset": base.name, "condition": condition }),
        || {
            if condition != SummaryCondition::Enrich {
                return Ok(SummaryView::new(base.clone(), condition, Vec::new()));
            }
            let enrichment = enrich_summary(base, provider, config)?;
            Ok(SummaryView::new(enrichment.summary, condition, enrichment.warning.into_iter().collect()))
        },
        |view: &SummaryView| json!({ "fields": view.summary.fields.len(), "warnings": view.warnings }),
    )
}

pub fn explore(
    summary: &DatasetSummary,
    condition: SummaryCondition,
    n_goals: usize,
    persona: Option<&str>,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &EventLog,
) -> Result<GoalsView, AppError> {
    events.stage(
        Stage::Goals,
        json!({ "n_goals": n_goals, "persona": persona }),
        || {
            let mut request = GoalRequest::new(render_summary(summary, condition), n_goals);
            request.persona_hint = persona.filter(|p| !p.trim().is_empty()).map(String::from);
            let batch = explore_goals_with(summary, &request, provider, config)?;
            Ok::<_, AppError>(GoalsView { goals: batch.goals, rejected: batch.rejected })
        },
        |view: &GoalsView| json!({ "goals": view.goals.len(), "rejected": view.rejected.len() }),
    )
}

/// Everything [`visualize`] needs besides the provider.
pub struct VisualizeInput<'a> {
    pub summary: &'a DatasetSummary,
    pub condition: SummaryCondition,
    pub goal: Goal,
    pub grammar_id: &'a str,
    pub policy: FilterPolicy,
}

pub fn visualize(
    generator: &VisGenerator,
    input: VisualizeInput<'_>,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &Arc<EventLog>,
) -> Result<VisualizationView, AppError> {
    let request = VisRequest {
        summary: input.summary,
        condition: input.condition,
        goal: &input.goal,
        grammar_id: input.grammar_id,
        policy: input.policy.clone(),
    };
    let sink = StageSink(events.clone());
    events.emit(
        Stage::Generate,
        StageStatus::Started,
        json!({ "goal": input.goal.visualization, "grammar_id": input.grammar_id, "policy": input.policy }),
    );
    let drawn = generator.draw_candidates(&request, provider, config, &sink).map_err(AppError::from);
    let candidates = match drawn {
        Ok(c) => c,
        Err(e) => {
            events.emit(Stage::Generate, StageStatus::Failed, json!({ "message": e.message }));
            return Err(e);
        }
    };
    events.emit(Stage::Execute, StageStatus::Completed, json!({ "candidates": candidates.len() }));
    events.emit(Stage::Filter, StageStatus::Started, json!({ "policy": input.policy.kind }));
    let generation = generator.select(&request, candidates, provider, config, &sink).map_err(|e| {
        let e = AppError::from(e);
        events.emit(Stage::Filter, StageStatus::Failed, json!({ "message": e.message }));
        e
    })?;
    Ok(VisualizationView {
        visualization_index: 0,
        candidate: generation.selected,
        goal: input.goal,
        grammar_id: input.grammar_id.to_string(),
        condition: input.condition,
        policy: input.policy,
        summary_used: render_summary(input.summary, input.condition),
        candidates: generation.candidates,
        artifact_url: None,
    })
}

fn exec_context<'a>(
    generator: &'a VisGenerator,
    dataset: &'a autoviz::vis::DatasetRef,
    summary: &'a DatasetSummary,
) -> ExecContext<'a> {
    ExecContext { generator, dataset, dataset_name: &summary.name }
}

pub fn refine_step(
    generator: &VisGenerator,
    summary: &DatasetSummary,
    session: &mut RefinementSession,
    instruction: &str,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &EventLog,
) -> Result<RefineView, AppError> {
    let dataset = VisGenerator::dataset_ref(summary);
    let ctx = exec_context(generator, &dataset, summary);
    let turn = events.stage(
        Stage::Refine,
        json!({ "instruction": instruction }),
        || refine(session, instruction, &ctx, provider, config),
        |t: &RefinementTurn| json!({ "executed": t.executed, "no_op": t.no_op }),
    )?;
    Ok(RefineView { turn, turn_count: session.turns.len(), candidate: session.current.clone(), artifact_url: None })
}

pub fn explain_step(
    code: &str,
    dataset: &str,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &EventLog,
) -> Result<Explanation, AppError> {
    Ok(events.stage(Stage::Explain, Value::Null, || explain(code, provider, config, Some(dataset)), |_| Value::Null)?)
}

pub fn evaluate_step(
    code: &str,
    goal: &Goal,
    dataset: &str,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &EventLog,
) -> Result<EvaluationReport, AppError> {
    Ok(events.stage(
        Stage::Evaluate,
        Value::Null,
        || evaluate(code, goal, provider, config, Some(dataset)),
        |r: &EvaluationReport| json!({ "sevq": r.sevq }),
    )?)
}

#[allow(clippy::too_many_arguments)]
pub fn repair_step(
    generator: &VisGenerator,
    summary: &DatasetSummary,
    candidate: &CandidateProgram,
    goal: &Goal,
    evaluation: Option<EvaluationReport>,
    depth: u32,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &EventLog,
) -> Result<RepairView, AppError> {
    let evaluation = match evaluation {
        Some(report) => report,
        None => evaluate_step(&candidate.assembled_code, goal, &summary.name, provider, config, events)?,
    };
    let dataset = VisGenerator::dataset_ref(summary);
    let ctx = exec_context(generator, &dataset, summary);
    let outcome = events.stage(
        Stage::Repair,
        json!({ "sevq": evaluation.sevq, "depth": depth }),
        || repair(candidate, &evaluation, goal, &ctx, provider, config, depth),
        |o| json!({ "attempts": o.attempts.len(), "status": o.repaired.status }),
    )?;
    Ok(RepairView { candidate: outcome.repaired, attempts: outcome.attempts, evaluation, artifact_url: None })
}

pub fn recommend_step(
    summary: &DatasetSummary,
    goal: &Goal,
    k: usize,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    events: &EventLog,
) -> Result<GoalsView, AppError> {
    let batch = events.stage(
        Stage::Recommend,
        json!({ "k": k }),
        || recommend(summary, &RecommendContext::Goal(goal.clone()), k, provider, config),
        |b| json!({ "goals": b.goals.len() }),
    )?;
    Ok(GoalsView { goals: batch.goals, rejected: batch.rejected })
}

/// Options for stylizing a raster chart.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfographicOptions {
    pub style_ids: Vec<String>,
    pub custom_prompt: Option<String>,
    pub strength: Option<f64>,
    pub seed: Option<u64>,
}

pub fn infographic_step(
    candidate: &CandidateProgram,
    styles: &StyleLibrary,
    options: &InfographicOptions,
    provider: &dyn ImageProvider,
    out: &Path,
    events: &EventLog,
) -> Result<InfographicView, AppError> {
    let base = match &candidate.artifact {
        Some(Artifact::Raster { path }) => path.clone(),
        Some(Artifact::Spec { .. }) => {
            return Err(AppError::validation(
                "not_raster",
                "infographics need a raster chart; this grammar renders a spec",
            ))
        }
        None => return Err(AppError::validation("not_compiled", "the visualization has no artifact")),
    };
    let request = compose_request(
        styles,
        &base,
        &options.style_ids,
        options.custom_prompt.as_deref(),
        options.strength,
        options.seed,
    )?;
    let image = events.stage(
        Stage::Infographic,
        json!({ "style_prompt": request.style_prompt, "strength": request.strength }),
        || stylize(&request, provider, out, None),
        |img| json!({ "width": img.width, "height": img.height }),
    )?;
    Ok(InfographicView { image, style_prompt: request.style_prompt, strength: request.strength, artifact_url: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_choice_needs_exactly_one_source() {
        assert!(GoalChoice::from_parts(None, None).is_err());
        assert!(GoalChoice::from_parts(Some(1), Some("x".into())).is_err());
        assert!(GoalChoice::from_parts(None, Some("  ".into())).is_err());
        assert_eq!(GoalChoice::from_parts(Some(2), None).unwrap(), GoalChoice::Index(2));
    }

    #[test]
    fn text_goals_are_user_provided() {
        let goal = GoalChoice::Text("mean price by year".into()).resolve(&[]).unwrap();
        assert_eq!(goal.rationale, "user-provided");
        assert_eq!(goal.visualization, "mean price by year");
    }

    #[test]
    fn missing_goal_index_is_not_found() {
        let err = GoalChoice::Index(3).resolve(&[]).unwrap_err();
        assert_eq!(err.kind, crate::error::ErrorKind::NotFound);
    }

    #[test]
    fn visualization_view_flattens_the_candidate() {
        let scaffold = autoviz::vis::ScaffoldLibrary::bundled().get_scaffold("vegalite").unwrap();
        let candidate = CandidateProgram::from_reply(0, 0, &scaffold, "{}");
        let view = VisualizationView {
            visualization_index: 1,
            candidate,
            goal: Goal::user_provided(0, "x"),
            grammar_id: "vegalite".into(),
            condition: SummaryCondition::Enrich,
            policy: FilterPolicy::default(),
            summary_used: String::new(),
            candidates: Vec::new(),
            artifact_url: None,
        };
        let value = serde_json::to_value(&view).unwrap();
        assert!(value.get("assembled_code").is_some());
        assert!(value.get("artifact_url").is_none());
        let back: VisualizationView = serde_json::from_value(value).unwrap();
        assert_eq!(back, view);
    }
}
