//! Conversational refinement and critique-driven repair.

use serde::{Deserialize, Serialize};

use super::evaluate::EvaluationReport;
use super::{ExecContext, OpsError};
use crate::goals::Goal;
use crate::llm::{generate, GenerationConfig, Message, PromptRequest, TextProvider};
use crate::vis::{CandidateProgram, CandidateStatus, Scaffold};

/// Turns of history replayed into each refinement prompt.
pub const HISTORY_WINDOW: usize = 4;

/// Dimensions scoring below this are quoted in repair prompts.
pub const REPAIR_SCORE_THRESHOLD: u8 = 8;

pub const DEFAULT_REPAIR_DEPTH: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTurn {
    pub instruction: String,
    pub before_code: String,
    pub after_code: String,
    pub after_stub: String,
    pub executed: CandidateStatus,
    #[serde(default)]
    pub error_detail: Option<String>,
    /// The provider returned the current code unchanged.
    pub no_op: bool,
}

/// Ordered refinement transcript for one visualization. The current
/// candidate is always the last one that compiled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSession {
    pub goal: Goal,
    pub dataset: String,
    pub current: CandidateProgram,
    pub turns: Vec<RefinementTurn>,
}

impl RefinementSession {
    pub fn new(goal: Goal, dataset: impl Into<String>, current: CandidateProgram) -> Result<Self, OpsError> {
        if current.status != CandidateStatus::CompiledOk {
            return Err(OpsError::NotCompiled(current.status));
        }
        Ok(Self { goal, dataset: dataset.into(), current, turns: Vec::new() })
    }
}

const REFINE_SYSTEM: &str = "You modify visualization code according to user instructions. Instructions may be \
written in any language. Keep everything the instruction does not ask to change.";

pub fn refine_prompt(scaffold: &Scaffold, session: &RefinementSession, instruction: &str) -> PromptRequest {
    let mut messages = Vec::new();
    let start = session.turns.len().saturating_sub(HISTORY_WINDOW);
    for turn in &session.turns[start..] {
        messages.push(Message::user(format!("Instruction: {}", turn.instruction)));
        messages.push(Message::assistant(turn.after_stub.clone()));
    }
    messages.push(Message::user(format!(
        "Visualization goal: {}\n\nCurrent stub:\n```\n{}\n```\n\nInstruction: {}\n\n\
Return ONLY the updated code that replaces {} in the scaffold, with no explanation.",
        session.goal.visualization, session.current.stub, instruction, scaffold.stub_marker
    )));
    PromptRequest::fill_in_middle(REFINE_SYSTEM, messages, scaffold.preamble.clone(), scaffold.postamble.clone())
        .with_meta("task", "refine")
        .with_meta("grammar", scaffold.grammar_id.clone())
        .with_meta("dataset", session.dataset.clone())
        .with_meta("goal_index", session.goal.index.to_string())
}

fn execute_reply(
    ctx: &ExecContext<'_>,
    scaffold: &Scaffold,
    goal_index: usize,
    candidate_index: usize,
    reply: &str,
) -> CandidateProgram {
    let candidate = CandidateProgram::from_reply(goal_index, candidate_index, scaffold, reply);
    ctx.generator.executor().execute(scaffold, candidate, ctx.dataset)
}

/// Applies one instruction. The turn is appended whether or not the new
/// code compiles; on failure the current candidate is kept and
/// [`OpsError::NoViableCandidate`] is returned.
pub fn refine(
    session: &mut RefinementSession,
    instruction: &str,
    ctx: &ExecContext<'_>,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
) -> Result<RefinementTurn, OpsError> {
    if instruction.trim().is_empty() {
        return Err(OpsError::EmptyInstruction);
    }
    let scaffold = ctx.generator.library().get_scaffold(&session.current.scaffold_ref)?;
    let prompt = refine_prompt(&scaffold, session, instruction);
    let config = GenerationConfig { n_candidates: 1, ..config.clone() };
    let reply = generate(provider, &prompt, &config)?;
    let index = session.current.candidate_index + 1;
    let executed = execute_reply(ctx, &scaffold, session.goal.index, index, reply.first());
    let turn = RefinementTurn {
        instruction: instruction.to_string(),
        before_code: session.current.assembled_code.clone(),
        after_code: executed.assembled_code.clone(),
        after_stub: executed.stub.clone(),
        executed: executed.status,
        error_detail: executed.error_detail.clone(),
        no_op: executed.assembled_code == session.current.assembled_code,
    };
    session.turns.push(turn.clone());
    if executed.status == CandidateStatus::CompiledOk {
        session.current = executed;
        Ok(turn)
    } else {
        Err(OpsError::NoViableCandidate { attempts: vec![executed] })
    }
}

const REPAIR_SYSTEM: &str = "You fix visualization code. You receive the code, the goal it should meet and a \
critique; you return corrected code that addresses every point of the critique.";

pub fn repair_prompt(
    scaffold: &Scaffold,
    goal: &Goal,
    candidate: &CandidateProgram,
    report: &EvaluationReport,
    attempt: u32,
) -> PromptRequest {
    let mut critique: Vec<String> = report
        .scores
        .iter()
        .filter(|s| s.score < REPAIR_SCORE_THRESHOLD)
        .map(|s| format!("- {} ({}/10): {}", s.dimension.title(), s.score, s.rationale))
        .collect();
    if critique.is_empty() {
        critique = report
            .scores
            .iter()
            .map(|s| format!("- {} ({}/10): {}", s.dimension.title(), s.score, s.rationale))
            .collect();
    }
    if let Some(err) = &candidate.error_detail {
        critique.push(format!("- Execution failed ({}): {}", candidate.status.as_str(), err));
    }
    let body = format!(
        "Visualization goal: {}\n\nCurrent stub:\n```\n{}\n```\n\nCritique:\n{}\n\n\
Return ONLY the corrected code that replaces {} in the scaffold, with no explanation.",
        goal.visualization,
        candidate.stub,
        critique.join("\n"),
        scaffold.stub_marker
    );
    PromptRequest::fill_in_middle(
        REPAIR_SYSTEM,
        vec![Message::user(body)],
        scaffold.preamble.clone(),
        scaffold.postamble.clone(),
    )
    .with_meta("task", "repair")
    .with_meta("grammar", scaffold.grammar_id.clone())
    .with_meta("goal_index", goal.index.to_string())
    .with_meta("attempt", attempt.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub repaired: CandidateProgram,
    pub attempts: Vec<CandidateProgram>,
}

/// Makes up to `depth + 1` repair attempts, each starting from the
/// previous attempt and its execution error.
pub fn repair(
    candidate: &CandidateProgram,
    report: &EvaluationReport,
    goal: &Goal,
    ctx: &ExecContext<'_>,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
    depth: u32,
) -> Result<RepairOutcome, OpsError> {
    let scaffold = ctx.generator.library().get_scaffold(&candidate.scaffold_ref)?;
    let config = GenerationConfig { n_candidates: 1, ..config.clone() };
    let mut attempts: Vec<CandidateProgram> = Vec::new();
    for attempt in 0..=depth {
        let base = attempts.last().unwrap_or(candidate);
        let prompt = repair_prompt(&scaffold, goal, base, report, attempt).with_meta("dataset", ctx.dataset_name);
        let reply = generate(provider, &prompt, &config)?;
        let index = candidate.candidate_index + 1 + attempt as usize;
        let executed = execute_reply(ctx, &scaffold, goal.index, index, reply.first());
        let ok = executed.status == CandidateStatus::CompiledOk;
        attempts.push(executed);
        if ok {
            let repaired = attempts.last().cloned().expect("just pushed");
            return Ok(RepairOutcome { repaired, attempts });
        }
    }
    Err(OpsError::NoViableCandidate { attempts })
}
