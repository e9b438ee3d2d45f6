//! Operations on generated visualization code: refine, explain,
//! evaluate, repair and recommend.

mod evaluate;
mod refine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use evaluate::{
    dimension_prompt, evaluate, mean_score, parse_dimension_reply, Dimension, DimensionScore, EvaluationReport,
};
pub use refine::{
    refine, refine_prompt, repair, repair_prompt, RefinementSession, RefinementTurn, RepairOutcome,
    DEFAULT_REPAIR_DEPTH, HISTORY_WINDOW, REPAIR_SCORE_THRESHOLD,
};

use crate::goals::{parse_goals, Goal, GoalBatch, GoalError};
use crate::llm::{generate, GenerationConfig, Message, PromptRequest, ProviderError, TextProvider};
use crate::summary::{render_summary, DatasetSummary, SummaryCondition};
use crate::vis::{CandidateProgram, CandidateStatus, DatasetRef, VisError, VisGenerator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpsError {
    #[error("code is empty")]
    EmptyCode,
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("operation needs a compiled candidate, got {0:?}")]
    NotCompiled(CandidateStatus),
    #[error("no viable candidate after {} attempt(s)", attempts.len())]
    NoViableCandidate { attempts: Vec<CandidateProgram> },
    #[error("explanation reply has no recognizable sections")]
    ExplanationParseFailure { raw: String },
    #[error("could not parse a 1-10 score for {dimension:?}")]
    ScoreParseFailure { dimension: Dimension, reply: String },
    #[error("no dimension could be scored")]
    EvaluationFailed { missing: Vec<Dimension> },
    #[error("k must be at least 1")]
    InvalidCount,
    #[error("reply contains no parsable JSON goal list")]
    NoParsableJson,
    #[error(transparent)]
    Vis(#[from] VisError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Where re-generated code is executed.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext<'a> {
    pub generator: &'a VisGenerator,
    pub dataset: &'a DatasetRef,
    pub dataset_name: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub code_walkthrough: String,
    pub accessibility_description: String,
}

pub const WALKTHROUGH_HEADER: &str = "Code walkthrough";
pub const ACCESSIBILITY_HEADER: &str = "Accessibility description";

const EXPLAIN_SYSTEM: &str = "You explain visualization code to analysts and describe the resulting chart for \
readers who cannot see it.";

pub fn explain_prompt(code: &str) -> PromptRequest {
    let body = format!(
        "Code:\n```\n{code}\n```\n\nWrite two sections, each starting with a markdown header on its own line:\n\
## {WALKTHROUGH_HEADER}\nA step-by-step explanation of what the code does (data transformation, marks, encodings, styling).\n\
## {ACCESSIBILITY_HEADER}\nA concise description of the rendered chart for screen-reader users."
    );
    PromptRequest::completion(EXPLAIN_SYSTEM, vec![Message::user(body)]).with_meta("task", "explain")
}

fn header_name(line: &str) -> Option<String> {
    let t = line.trim();
    let stripped = t.trim_start_matches('#').trim().trim_matches('*').trim().trim_end_matches(':').trim();
    let is_header = t.starts_with('#') || t.starts_with("**") || t.ends_with(':');
    (is_header && !stripped.is_empty()).then(|| stripped.to_lowercase())
}

/// Splits a reply into the two expected sections.
pub fn parse_explanation(reply: &str) -> Result<Explanation, OpsError> {
    let wanted = [WALKTHROUGH_HEADER.to_lowercase(), ACCESSIBILITY_HEADER.to_lowercase()];
    let mut sections: [Option<Vec<&str>>; 2] = [None, None];
    let mut current: Option<usize> = None;
    for line in reply.lines() {
        if let Some(name) = header_name(line) {
            if let Some(i) = wanted.iter().position(|w| *w == name) {
                current = Some(i);
                sections[i].get_or_insert_with(Vec::new);
                continue;
            }
        }
        if let Some(i) = current {
            sections[i].get_or_insert_with(Vec::new).push(line);
        }
    }
    let text = |s: &Option<Vec<&str>>| s.as_ref().map(|l| l.join("\n").trim().to_string()).filter(|t| !t.is_empty());
    match (text(&sections[0]), text(&sections[1])) {
        (Some(code_walkthrough), Some(accessibility_description)) => {
            Ok(Explanation { code_walkthrough, accessibility_description })
        }
        _ => Err(OpsError::ExplanationParseFailure { raw: reply.to_string() }),
    }
}

pub fn explain(
    code: &str,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    dataset: Option<&str>,
) -> Result<Explanation, OpsError> {
    if code.trim().is_empty() {
        return Err(OpsError::EmptyCode);
    }
    let mut prompt = explain_prompt(code);
    if let Some(name) = dataset {
        prompt = prompt.with_meta("dataset", name);
    }
    let reply = generate(provider, &prompt, &GenerationConfig { n_candidates: 1, ..config.clone() })?;
    parse_explanation(reply.first())
}

/// What a recommendation is relative to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RecommendContext {
    Goal(Goal),
    Code(String),
}

const RECOMMEND_SYSTEM: &str = "You are a visualization specialist. Given a dataset summary and an existing \
visualization, you suggest further visualizations that complement it (for comparison, drill-down or context). \
Follow visualization best practices and avoid pie charts.";

pub fn recommend_prompt(summary_text: &str, context: &RecommendContext, k: usize) -> PromptRequest {
    let existing = match context {
        RecommendContext::Goal(g) => format!("Existing visualization goal: {}\n{}", g.question, g.visualization),
        RecommendContext::Code(code) => format!("Existing visualization code:\n```\n{code}\n```"),
    };
    let body = format!(
        "Data summary:\n{summary_text}\n\n{existing}\n\nRecommend {k} additional visualizations. Return a JSON array \
of objects with the keys \"question\", \"visualization\" and \"rationale\". Wrap every field name in backticks and \
only use fields from the summary. Output the JSON array only."
    );
    PromptRequest::completion(RECOMMEND_SYSTEM, vec![Message::user(body)])
        .with_meta("task", "recommend")
        .with_meta("k", k.to_string())
}

fn goal_key(g: &Goal) -> String {
    g.visualization.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Up to `k` new goals, filtered like explored goals and deduplicated
/// against each other and the context goal.
pub fn recommend(
    summary: &DatasetSummary,
    context: &RecommendContext,
    k: usize,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
) -> Result<GoalBatch, OpsError> {
    if k == 0 {
        return Err(OpsError::InvalidCount);
    }
    let summary_text = render_summary(summary, SummaryCondition::Enrich);
    let prompt = recommend_prompt(&summary_text, context, k).with_meta("dataset", summary.name.clone());
    let reply = generate(provider, &prompt, &GenerationConfig { n_candidates: 1, ..config.clone() })?;
    let batch = match parse_goals(reply.first(), summary) {
        Ok(b) => b,
        Err(GoalError::AllGoalsRejected { rejections, .. }) => GoalBatch { goals: Vec::new(), rejected: rejections },
        Err(GoalError::NoParsableJson) => return Err(OpsError::NoParsableJson),
        Err(GoalError::Provider(e)) => return Err(OpsError::Provider(e)),
        Err(GoalError::InvalidGoalCount) => return Err(OpsError::InvalidCount),
    };
    let mut seen: Vec<String> = match context {
        RecommendContext::Goal(g) => vec![goal_key(g)],
        RecommendContext::Code(_) => Vec::new(),
    };
    let mut goals = Vec::new();
    for g in batch.goals {
        let key = goal_key(&g);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        goals.push(Goal { index: goals.len(), ..g });
        if goals.len() == k {
            break;
        }
    }
    Ok(GoalBatch { goals, rejected: batch.rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ProviderResponse, ScriptedProvider};
    use crate::summary::{build_base_summary, Cell, Column, Table};
    use crate::vis::{assemble, Executor, ScaffoldLibrary};
    use std::sync::Arc;

    fn summary(dir: &std::path::Path) -> DatasetSummary {
        let path = dir.join("cars.csv");
        std::fs::write(&path, "Origin,Horsepower\nUSA,130\nJapan,95\n").unwrap();
        let t = Table {
            name: "cars".into(),
            source_path: path.display().to_string(),
            columns: vec![
                Column { name: "Origin".into(), cells: vec![Cell::Str("USA".into()), Cell::Str("Japan".into())] },
                Column { name: "Horsepower".into(), cells: vec![Cell::Int(130), Cell::Int(95)] },
            ],
        };
        build_base_summary(&t, 5, 0).unwrap()
    }

    fn goal() -> Goal {
        Goal {
            index: 0,
            question: "q".into(),
            visualization: "bar chart of `Horsepower` by `Origin`".into(),
            rationale: "r".into(),
        }
    }

    const BAR: &str = r#"  "mark": "bar", "encoding": {"x": {"field": "Origin", "type": "nominal"}, "y": {"field": "Horsepower", "type": "quantitative"}}"#;
    const ARC: &str = r#"  "mark": "arc", "encoding": {"theta": {"field": "Horsepower", "type": "quantitative"}, "color": {"field": "Origin", "type": "nominal"}}"#;

    struct Fixture {
        _tmp: tempfile::TempDir,
        generator: VisGenerator,
        dataset: DatasetRef,
        current: CandidateProgram,
    }

    fn fixture() -> Fixture {
        let tmp = tempfile::tempdir().unwrap();
        let s = summary(tmp.path());
        let generator = VisGenerator::new(
            Arc::new(ScaffoldLibrary::bundled()),
            Arc::new(Executor::new(tmp.path().join("runs")).unwrap()),
        );
        let dataset = VisGenerator::dataset_ref(&s);
        let scaffold = generator.library().get_scaffold("vegalite").unwrap();
        let c = CandidateProgram::new(0, 0, &scaffold, ARC.into(), assemble(&scaffold, ARC).unwrap());
        let current = generator.executor().execute(&scaffold, c, &dataset);
        assert_eq!(current.status, CandidateStatus::CompiledOk);
        Fixture { _tmp: tmp, generator, dataset, current }
    }

    fn reply(text: &'static str) -> ScriptedProvider {
        ScriptedProvider::constant(text)
    }

    #[test]
    fn refine_appends_turns_and_rolls_back_failures() {
        let f = fixture();
        let ctx = ExecContext { generator: &f.generator, dataset: &f.dataset, dataset_name: "cars" };
        let mut session = RefinementSession::new(goal(), "cars", f.current.clone()).unwrap();
        let titled = r#"  "title": "Horsepower por origen", "mark": "arc", "encoding": {"theta": {"field": "Horsepower", "type": "quantitative"}, "color": {"field": "Origin", "type": "nominal"}}"#;
        let turn = refine(&mut session, "pon el título en español", &ctx, &reply(titled), &GenerationConfig::default())
            .unwrap();
        assert_eq!(turn.instruction, "pon el título en español");
        assert!(turn.after_code.contains("Horsepower por origen"));
        assert!(!turn.no_op);
        assert_eq!(session.turns.len(), 1);

        let before = session.current.clone();
        let err =
            refine(&mut session, "break it", &ctx, &reply("\"mark\": "), &GenerationConfig::default()).unwrap_err();
        assert!(matches!(err, OpsError::NoViableCandidate { .. }));
        assert_eq!(session.turns.len(), 2);
        assert_ne!(session.turns[1].executed, CandidateStatus::CompiledOk);
        assert_eq!(session.current, before);

        let same =
            refine(&mut session, "keep it", &ctx, &ScriptedProvider::constant(titled), &GenerationConfig::default())
                .unwrap();
        assert!(same.no_op);
    }

    #[test]
    fn refine_history_is_windowed() {
        let f = fixture();
        let mut session = RefinementSession::new(goal(), "cars", f.current.clone()).unwrap();
        for i in 0..6 {
            session.turns.push(RefinementTurn {
                instruction: format!("step {i}"),
                before_code: String::new(),
                after_code: String::new(),
                after_stub: String::new(),
                executed: CandidateStatus::CompiledOk,
                error_detail: None,
                no_op: false,
            });
        }
        let s = f.generator.library().get_scaffold("vegalite").unwrap();
        let text = refine_prompt(&s, &session, "next").full_text();
        assert!(!text.contains("step 1") && text.contains("step 2") && text.contains("step 5"));
    }

    #[test]
    fn repair_attempts_are_bounded() {
        let f = fixture();
        let ctx = ExecContext { generator: &f.generator, dataset: &f.dataset, dataset_name: "cars" };
        let report = EvaluationReport::from_scores(
            vec![DimensionScore {
                dimension: Dimension::VisualizationType,
                score: 3,
                rationale: "use a bar chart".into(),
            }],
            vec![],
        )
        .unwrap();
        let out = repair(&f.current, &report, &goal(), &ctx, &reply(BAR), &GenerationConfig::default(), 0).unwrap();
        assert_eq!(out.attempts.len(), 1);
        assert_eq!(out.repaired.status, CandidateStatus::CompiledOk);
        assert!(out.repaired.assembled_code.contains("\"bar\""));

        let calls = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let counter = calls.clone();
        let broken = ScriptedProvider::new(move |req, _| {
            counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            assert!(req.full_text().contains("use a bar chart"));
            Ok(ProviderResponse::new(vec!["\"mark\": ".into()]))
        });
        let err = repair(&f.current, &report, &goal(), &ctx, &broken, &GenerationConfig::default(), 2).unwrap_err();
        let OpsError::NoViableCandidate { attempts } = err else { panic!("expected NoViableCandidate") };
        assert_eq!(attempts.len(), 3);
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 3);
    }

    #[test]
    fn explanation_sections() {
        let reply = "## Code walkthrough\nDraws bars.\n\n## Accessibility description\nA bar chart of horsepower.";
        let e = parse_explanation(reply).unwrap();
        assert_eq!(e.code_walkthrough, "Draws bars.");
        assert_eq!(e.accessibility_description, "A bar chart of horsepower.");
        let bold = "**Code walkthrough:**\nx\n**Accessibility Description:**\ny";
        assert!(parse_explanation(bold).is_ok());
        let err = parse_explanation("It is a chart.").unwrap_err();
        assert_eq!(err, OpsError::ExplanationParseFailure { raw: "It is a chart.".into() });
        let p = reply_provider(reply);
        assert!(matches!(explain("", &p, &GenerationConfig::default(), None), Err(OpsError::EmptyCode)));
        assert!(explain("x", &p, &GenerationConfig::default(), None).is_ok());
    }

    fn reply_provider(text: &'static str) -> ScriptedProvider {
        ScriptedProvider::constant(text)
    }

    #[test]
    fn recommendations_are_filtered_deduped_and_capped() {
        let tmp = tempfile::tempdir().unwrap();
        let s = summary(tmp.path());
        let raw = r#"[
 {"question": "a", "visualization": "bar chart of `Horsepower` by `Origin`", "rationale": "dup of context"},
 {"question": "b", "visualization": "histogram of `Horsepower`", "rationale": "r"},
 {"question": "c", "visualization": "Histogram of  `Horsepower`", "rationale": "dup"},
 {"question": "d", "visualization": "line chart of `Weight`", "rationale": "hallucinated"},
 {"question": "e", "visualization": "count of cars per `Origin`", "rationale": "r"},
 {"question": "f", "visualization": "box plot of `Horsepower` by `Origin`", "rationale": "r"}
]"#;
        let p = ScriptedProvider::constant(raw);
        let ctx = RecommendContext::Goal(goal());
        let out = recommend(&s, &ctx, 3, &p, &GenerationConfig::default()).unwrap();
        let qs: Vec<_> = out.goals.iter().map(|g| g.question.as_str()).collect();
        assert_eq!(qs, vec!["b", "e", "f"]);
        assert_eq!(out.hallucinated_count(), 1);
        assert_eq!(recommend(&s, &ctx, 1, &p, &GenerationConfig::default()).unwrap().goals.len(), 1);
        assert!(matches!(recommend(&s, &ctx, 0, &p, &GenerationConfig::default()), Err(OpsError::InvalidCount)));
        let junk = ScriptedProvider::constant("no idea");
        assert!(matches!(recommend(&s, &ctx, 2, &junk, &GenerationConfig::default()), Err(OpsError::NoParsableJson)));
    }
}
