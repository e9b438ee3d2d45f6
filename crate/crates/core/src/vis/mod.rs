//! Visualization generation: scaffold filling, sandboxed execution and
//! candidate filtering.

mod exec;
mod sandbox;
mod scaffold;
mod select;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use exec::{derived_fields, referenced_fields, DatasetRef, ExecLimits, Executor};
pub use sandbox::{DirDiff, DirSnapshot};
pub use scaffold::{
    assemble, postprocess_stub, CodeStyle, ExecutionMode, RegistryEntry, Scaffold, ScaffoldLibrary,
    DATA_PATH_PLACEHOLDER, STUB_MARKER,
};
pub use select::{argmax_lowest, consensus_index, normalize_code, select_by_consistency, select_by_correctness};

use crate::goals::Goal;
use crate::llm::{generate, GenerationConfig, Message, PromptRequest, ProviderError, TextProvider};
use crate::progress::{NullSink, ProgressEvent, ProgressSink};
use crate::summary::{render_summary, DatasetSummary, SummaryCondition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisError {
    #[error("unknown grammar {0:?}")]
    UnknownGrammar(String),
    #[error("invalid scaffold {grammar_id}: {reason}")]
    InvalidScaffold { grammar_id: String, reason: String },
    #[error("stub is empty after post-processing")]
    EmptyStub,
    #[error("no viable candidate among {attempted} ({statuses})")]
    NoViableCandidate { attempted: usize, statuses: String },
    #[error("invalid filter policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl VisError {
    pub(crate) fn no_viable(candidates: &[CandidateProgram]) -> Self {
        let statuses = candidates.iter().map(|c| c.status.as_str()).collect::<Vec<_>>().join(", ");
        VisError::NoViableCandidate { attempted: candidates.len(), statuses }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Unexecuted,
    CompiledOk,
    CompileError,
    RuntimeError,
    Timeout,
}

impl CandidateStatus {
    pub const ALL: [CandidateStatus; 5] = [
        CandidateStatus::Unexecuted,
        CandidateStatus::CompiledOk,
        CandidateStatus::CompileError,
        CandidateStatus::RuntimeError,
        CandidateStatus::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateStatus::Unexecuted => "unexecuted",
            CandidateStatus::CompiledOk => "compiled_ok",
            CandidateStatus::CompileError => "compile_error",
            CandidateStatus::RuntimeError => "runtime_error",
            CandidateStatus::Timeout => "timeout",
        }
    }

    /// Counts toward the visualization error rate.
    pub fn is_error(self) -> bool {
        matches!(self, CandidateStatus::CompileError | CandidateStatus::RuntimeError | CandidateStatus::Timeout)
    }
}

/// Rendered output of a compiled candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    Raster { path: PathBuf },
    Spec { path: PathBuf, spec: Value },
}

impl Artifact {
    pub fn path(&self) -> &PathBuf {
        match self {
            Artifact::Raster { path } | Artifact::Spec { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub goal_index: usize,
    pub candidate_index: usize,
    pub scaffold_ref: String,
    pub stub: String,
    pub assembled_code: String,
    pub status: CandidateStatus,
    pub error_detail: Option<String>,
    pub artifact: Option<Artifact>,
    pub correctness_score: Option<f64>,
}

impl CandidateProgram {
    pub fn new(
        goal_index: usize,
        candidate_index: usize,
        scaffold: &Scaffold,
        stub: String,
        assembled_code: String,
    ) -> Self {
        Self {
            goal_index,
            candidate_index,
            scaffold_ref: scaffold.grammar_id.clone(),
            stub,
            assembled_code,
            status: CandidateStatus::Unexecuted,
            error_detail: None,
            artifact: None,
            correctness_score: None,
        }
    }

    /// Builds a candidate from a raw model reply. An empty stub yields a
    /// `compile_error` candidate that is never executed.
    pub fn from_reply(goal_index: usize, candidate_index: usize, scaffold: &Scaffold, reply: &str) -> Self {
        let stub = postprocess_stub(scaffold, reply);
        match assemble(scaffold, &stub) {
            Ok(code) => Self::new(goal_index, candidate_index, scaffold, stub, code),
            Err(e) => {
                let code = format!("{}{}", scaffold.preamble, scaffold.postamble);
                let mut c = Self::new(goal_index, candidate_index, scaffold, stub, code);
                c.status = CandidateStatus::CompileError;
                c.error_detail = Some(e.to_string());
                c
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    CompileDiscard,
    SelfConsistency,
    CorrectnessProbability,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "compile_discard" => Ok(PolicyKind::CompileDiscard),
            "self_consistency" => Ok(PolicyKind::SelfConsistency),
            "correctness_probability" => Ok(PolicyKind::CorrectnessProbability),
            other => Err(format!(
                "unknown policy {other:?} (expected compile_discard, self_consistency or correctness_probability)"
            )),
        }
    }
}

/// Sampling temperature used by `compile_discard` when it draws more than
/// one candidate and no override is given.
pub const DISCARD_SAMPLING_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub kind: PolicyKind,
    pub n_candidates: u32,
    #[serde(default)]
    pub temperature_override: Option<f64>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self::compile_discard(1)
    }
}

impl FilterPolicy {
    pub fn compile_discard(n: u32) -> Self {
        Self { kind: PolicyKind::CompileDiscard, n_candidates: n, temperature_override: None }
    }

    pub fn self_consistency(n: u32) -> Self {
        Self { kind: PolicyKind::SelfConsistency, n_candidates: n, temperature_override: None }
    }

    pub fn correctness_probability(n: u32) -> Self {
        Self { kind: PolicyKind::CorrectnessProbability, n_candidates: n, temperature_override: None }
    }

    pub fn validate(&self) -> Result<(), VisError> {
        if self.n_candidates == 0 {
            return Err(VisError::InvalidPolicy("n_candidates must be at least 1".into()));
        }
        if self.kind != PolicyKind::CompileDiscard && self.n_candidates < 2 {
            return Err(VisError::InvalidPolicy(format!("{:?} needs n_candidates >= 2", self.kind)));
        }
        if let Some(t) = self.temperature_override {
            if !(0.0..=2.0).contains(&t) {
                return Err(VisError::InvalidPolicy(format!("temperature_override {t} outside [0, 2]")));
            }
        }
        Ok(())
    }

    /// Generation settings for the candidate draw.
    pub fn sampling_config(&self, base: &GenerationConfig) -> GenerationConfig {
        let temperature = match (self.temperature_override, self.kind) {
            (Some(t), _) => t,
            (None, PolicyKind::CompileDiscard) if self.n_candidates > 1 => DISCARD_SAMPLING_TEMPERATURE,
            (None, _) => base.temperature,
        };
        GenerationConfig { temperature, n_candidates: self.n_candidates, ..base.clone() }
    }
}

const CODEGEN_SYSTEM: &str = "You are an expert visualization engineer. You complete program scaffolds \
so that they render a chart answering a given goal. You follow visualization best practices: pick \
chart types that suit the data types, aggregate or transform data when the chart needs it, label \
axes and give the chart a title.";

/// Fill-in-the-middle request for the stub of `scaffold`.
pub fn build_codegen_prompt(summary_text: &str, goal: &Goal, scaffold: &Scaffold) -> PromptRequest {
    let mut body = String::new();
    if !summary_text.trim().is_empty() {
        body.push_str("Dataset summary:\n");
        body.push_str(summary_text.trim_end());
        body.push_str("\n\n");
    }
    body.push_str(&format!("Goal: {}\nVisualization: {}\n\n", goal.question, goal.visualization));
    body.push_str(&format!(
        "Grammar: {} ({})\n{}\n\n",
        scaffold.grammar_id, scaffold.language_id, scaffold.instructions
    ));
    body.push_str(&format!(
        "Return ONLY the code that replaces {} in the scaffold. Do not repeat the code before or after it, \
         and do not add explanations.",
        scaffold.stub_marker
    ));
    PromptRequest::fill_in_middle(
        CODEGEN_SYSTEM,
        vec![Message::user(body)],
        scaffold.preamble.clone(),
        scaffold.postamble.clone(),
    )
    .with_meta("task", "codegen")
    .with_meta("grammar", scaffold.grammar_id.clone())
    .with_meta("goal_index", goal.index.to_string())
}

/// Everything needed to generate one visualization.
#[derive(Debug, Clone)]
pub struct VisRequest<'a> {
    pub summary: &'a DatasetSummary,
    pub condition: SummaryCondition,
    pub goal: &'a Goal,
    pub grammar_id: &'a str,
    pub policy: FilterPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub selected: CandidateProgram,
    pub candidates: Vec<CandidateProgram>,
}

/// Scaffold library plus executor: the stateful half of generation.
#[derive(Debug, Clone)]
pub struct VisGenerator {
    library: Arc<ScaffoldLibrary>,
    executor: Arc<Executor>,
}

impl VisGenerator {
    pub fn new(library: Arc<ScaffoldLibrary>, executor: Arc<Executor>) -> Self {
        Self { library, executor }
    }

    pub fn library(&self) -> &ScaffoldLibrary {
        &self.library
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn dataset_ref(summary: &DatasetSummary) -> DatasetRef {
        DatasetRef::new(&summary.source_path, summary.field_names().into_iter().map(String::from).collect())
    }

    pub fn generate(
        &self,
        request: &VisRequest<'_>,
        provider: &dyn TextProvider,
        config: &GenerationConfig,
    ) -> Result<Generation, VisError> {
        self.generate_observed(request, provider, config, &NullSink)
    }

    /// Prompt, sample, assemble, execute, filter.
    pub fn generate_observed(
        &self,
        request: &VisRequest<'_>,
        provider: &dyn TextProvider,
        config: &GenerationConfig,
        sink: &dyn ProgressSink,
    ) -> Result<Generation, VisError> {
        let candidates = self.draw_candidates(request, provider, config, sink)?;
        self.select(request, candidates, provider, config, sink)
    }

    /// Prompts for, assembles and executes the policy's candidates without
    /// selecting one.
    pub fn draw_candidates(
        &self,
        request: &VisRequest<'_>,
        provider: &dyn TextProvider,
        config: &GenerationConfig,
        sink: &dyn ProgressSink,
    ) -> Result<Vec<CandidateProgram>, VisError> {
        request.policy.validate()?;
        let scaffold = self.library.get_scaffold(request.grammar_id)?;
        let summary_text = render_summary(request.summary, request.condition);
        let prompt = build_codegen_prompt(&summary_text, request.goal, &scaffold)
            .with_meta("dataset", request.summary.name.clone());
        let sampling = request.policy.sampling_config(config);
        sink.emit(ProgressEvent::stage("codegen", format!("requesting {} candidate(s)", sampling.n_candidates)));
        let reply = generate(provider, &prompt, &sampling)?;
        let candidates: Vec<CandidateProgram> = reply
            .candidates
            .iter()
            .enumerate()
            .map(|(i, text)| CandidateProgram::from_reply(request.goal.index, i, &scaffold, text))
            .collect();
        sink.emit(ProgressEvent::stage("execute", format!("executing {} candidate(s)", candidates.len())));
        let candidates = self.executor.execute_all(&scaffold, candidates, &Self::dataset_ref(request.summary));
        for c in &candidates {
            sink.emit(ProgressEvent::candidate(c.candidate_index, c.status.as_str(), c.error_detail.clone()));
        }
        Ok(candidates)
    }

    /// Applies the request's filter policy to executed candidates.
    pub fn select(
        &self,
        request: &VisRequest<'_>,
        mut candidates: Vec<CandidateProgram>,
        provider: &dyn TextProvider,
        config: &GenerationConfig,
        sink: &dyn ProgressSink,
    ) -> Result<Generation, VisError> {
        let scaffold = self.library.get_scaffold(request.grammar_id)?;
        let selected = match request.policy.kind {
            PolicyKind::CompileDiscard => candidates
                .iter()
                .find(|c| c.status == CandidateStatus::CompiledOk)
                .cloned()
                .ok_or_else(|| VisError::no_viable(&candidates))?,
            PolicyKind::SelfConsistency => select_by_consistency(&candidates, &scaffold.code_style())?.clone(),
            PolicyKind::CorrectnessProbability => {
                let summary_text = render_summary(request.summary, request.condition);
                let context = format!("{summary_text}\nGoal: {}", request.goal.visualization);
                let score_config = GenerationConfig { n_candidates: 1, ..config.clone() };
                select_by_correctness(&mut candidates, provider, &context, &score_config)?
            }
        };
        sink.emit(ProgressEvent::stage("selected", format!("candidate {}", selected.candidate_index)));
        Ok(Generation { selected, candidates })
    }

    /// Runs the empty-chart stub of every registered scaffold against a
    /// two-column dataset written under the executor's run root.
    pub fn self_test(&self) -> Vec<CandidateProgram> {
        let dir = self.executor.run_root().join("self-test-data");
        let data = dir.join("self_test.csv");
        let written = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&data, "x,y\n1,2\n2,4\n3,1\n"));
        let dataset = DatasetRef::new(&data, vec!["x".into(), "y".into()]);
        self.library
            .iter()
            .map(|s| {
                let stub = s.empty_stub.clone();
                let mut c = match assemble(s, &stub) {
                    Ok(code) => CandidateProgram::new(0, 0, s, stub, code),
                    Err(e) => {
                        let mut c = CandidateProgram::new(0, 0, s, stub, String::new());
                        c.status = CandidateStatus::CompileError;
                        c.error_detail = Some(e.to_string());
                        c
                    }
                };
                if let Err(e) = &written {
                    c.status = CandidateStatus::RuntimeError;
                    c.error_detail = Some(format!("cannot write self-test data: {e}"));
                }
                self.executor.execute(s, c, &dataset)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{PromptMode, ProviderResponse, ScriptedProvider};
    use crate::summary::{build_base_summary, Cell, Column, Table};

    pub(crate) fn cars_summary(dir: &std::path::Path) -> DatasetSummary {
        let path = dir.join("cars.csv");
        std::fs::write(&path, "Name,Horsepower,Origin\nchevy,130,USA\ntoyota,95,Japan\n").unwrap();
        let t = Table {
            name: "cars".into(),
            source_path: path.display().to_string(),
            columns: vec![
                Column { name: "Name".into(), cells: vec![Cell::Str("chevy".into()), Cell::Str("toyota".into())] },
                Column { name: "Horsepower".into(), cells: vec![Cell::Int(130), Cell::Int(95)] },
                Column { name: "Origin".into(), cells: vec![Cell::Str("USA".into()), Cell::Str("Japan".into())] },
            ],
        };
        build_base_summary(&t, 5, 0).unwrap()
    }

    fn goal() -> Goal {
        Goal {
            index: 0,
            question: "How does horsepower vary by origin?".into(),
            visualization: "bar chart of mean `Horsepower` by `Origin`".into(),
            rationale: "r".into(),
        }
    }

    fn generator(dir: &std::path::Path) -> VisGenerator {
        VisGenerator::new(Arc::new(ScaffoldLibrary::bundled()), Arc::new(Executor::new(dir.join("runs")).unwrap()))
    }

    const GOOD: &str = r#"  "mark": "bar",
  "encoding": {"x": {"field": "Origin", "type": "nominal"}, "y": {"field": "Horsepower", "aggregate": "mean", "type": "quantitative"}}"#;

    #[test]
    fn codegen_prompt_shape() {
        let s = ScaffoldLibrary::bundled().get_scaffold("matplotlib").unwrap();
        let req = build_codegen_prompt("field: mpg", &goal(), &s);
        assert_eq!(req.mode, PromptMode::FillInMiddle);
        assert_eq!(req.fim_prefix.as_deref(), Some(s.preamble.as_str()));
        assert_eq!(req.fim_suffix.as_deref(), Some(s.postamble.as_str()));
        assert!(req.full_text().contains(&goal().visualization));
        assert!(req.full_text().contains("Dataset summary"));
        let bare = build_codegen_prompt("", &goal(), &s);
        assert!(!bare.full_text().contains("Dataset summary"));
    }

    #[test]
    fn policy_contracts() {
        assert!(FilterPolicy::self_consistency(1).validate().is_err());
        assert!(FilterPolicy::correctness_probability(1).validate().is_err());
        assert!(FilterPolicy::compile_discard(1).validate().is_ok());
        let base = GenerationConfig::default();
        assert_eq!(FilterPolicy::compile_discard(1).sampling_config(&base).temperature, 0.0);
        assert_eq!(FilterPolicy::compile_discard(4).sampling_config(&base).temperature, 0.7);
        let mut p = FilterPolicy::compile_discard(4);
        p.temperature_override = Some(1.1);
        assert_eq!(p.sampling_config(&base).temperature, 1.1);
    }

    #[test]
    fn declarative_generation_end_to_end() {
        let tmp = tempfile::tempdir().unwrap();
        let g = generator(tmp.path());
        let summary = cars_summary(tmp.path());
        let provider = ScriptedProvider::new(|_, cfg| {
            Ok(ProviderResponse::new((0..cfg.n_candidates).map(|_| GOOD.to_string()).collect()))
        });
        let goal = goal();
        let req = VisRequest {
            summary: &summary,
            condition: SummaryCondition::NoEnrich,
            goal: &goal,
            grammar_id: "vegalite",
            policy: FilterPolicy::self_consistency(3),
        };
        let out = g.generate(&req, &provider, &GenerationConfig::default()).unwrap();
        assert_eq!(out.candidates.len(), 3);
        assert_eq!(out.selected.status, CandidateStatus::CompiledOk);
        assert!(matches!(out.selected.artifact, Some(Artifact::Spec { .. })));
        assert_eq!(g.executor().processes_spawned(), 0);
    }

    #[test]
    fn all_broken_is_no_viable_candidate() {
        let tmp = tempfile::tempdir().unwrap();
        let g = generator(tmp.path());
        let summary = cars_summary(tmp.path());
        let provider = ScriptedProvider::constant("\"mark\": ");
        let goal = goal();
        let req = VisRequest {
            summary: &summary,
            condition: SummaryCondition::Schema,
            goal: &goal,
            grammar_id: "vegalite",
            policy: FilterPolicy::compile_discard(1),
        };
        let err = g.generate(&req, &provider, &GenerationConfig::default()).unwrap_err();
        assert!(matches!(err, VisError::NoViableCandidate { attempted: 1, .. }), "{err:?}");
        let req = VisRequest { policy: FilterPolicy::self_consistency(1), ..req };
        assert!(matches!(g.generate(&req, &provider, &GenerationConfig::default()), Err(VisError::InvalidPolicy(_))));
        let req = VisRequest { grammar_id: "nope", policy: FilterPolicy::default(), ..req };
        assert!(matches!(g.generate(&req, &provider, &GenerationConfig::default()), Err(VisError::UnknownGrammar(_))));
    }

    #[test]
    fn empty_reply_is_a_compile_error_candidate() {
        let s = ScaffoldLibrary::bundled().get_scaffold("vegalite").unwrap();
        let c = CandidateProgram::from_reply(0, 0, &s, "```\n```");
        assert_eq!(c.status, CandidateStatus::CompileError);
        assert!(c.artifact.is_none());
    }
}
