//! Benchmark runner: VER and SEVQ over datasets, grammars and summary
//! conditions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goals::{explore_goals, GoalError};
use crate::llm::{GenerationConfig, ProviderError, TextProvider};
use crate::ops::evaluate;
use crate::progress::NullSink;
use crate::summary::{
    build_base_summary, enrich_summary, ingest, DataFormat, DatasetSummary, SummaryCondition, SummaryError,
};
use crate::vis::{CandidateStatus, FilterPolicy, VisError, VisGenerator, VisRequest};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("E={e} and T={t} do not satisfy 0 <= E <= T with T >= 1")]
    DivisionByZeroTotal { e: u64, t: u64 },
    #[error("dataset {path}: {source}")]
    Dataset { path: String, source: SummaryError },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Error rate in percent: `E / T * 100`.
pub fn compute_ver(e: u64, t: u64) -> Result<f64, BenchError> {
    if t == 0 || e > t {
        return Err(BenchError::DivisionByZeroTotal { e, t });
    }
    Ok(e as f64 / t as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub datasets: Vec<PathBuf>,
    pub n_goals_per_dataset: usize,
    pub visualizations_per_goal: usize,
    pub grammars: Vec<String>,
    pub conditions: Vec<SummaryCondition>,
    pub generation: GenerationConfig,
    pub single_try: bool,
    pub policy: FilterPolicy,
    pub with_sevq: bool,
    pub sample_n: usize,
    pub rng_seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            n_goals_per_dataset: 5,
            visualizations_per_goal: 1,
            grammars: vec!["vegalite".into()],
            conditions: SummaryCondition::ALL.to_vec(),
            generation: GenerationConfig::benchmark(),
            single_try: true,
            policy: FilterPolicy::compile_discard(1),
            with_sevq: false,
            sample_n: crate::summary::DEFAULT_SAMPLE_N,
            rng_seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self, generator: &VisGenerator) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.datasets.is_empty() {
            return fail("dataset list is empty");
        }
        if self.grammars.is_empty() {
            return fail("grammar list is empty");
        }
        if self.conditions.is_empty() {
            return fail("condition list is empty");
        }
        if self.n_goals_per_dataset == 0 || self.visualizations_per_goal == 0 {
            return fail("goal and visualization counts must be at least 1");
        }
        for g in &self.grammars {
            generator.library().get_scaffold(g).map_err(|e| BenchError::Config(e.to_string()))?;
        }
        self.policy.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.generation.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        if self.single_try && self.policy.n_candidates != 1 {
            return fail("single_try allows exactly one candidate per visualization");
        }
        Ok(())
    }
}

/// Identifies one scheduled visualization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub dataset: String,
    pub condition: SummaryCondition,
    pub grammar: String,
    pub goal_index: usize,
    pub variant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub dataset: String,
    pub grammar: String,
    pub condition: SummaryCondition,
    pub goal_index: usize,
    pub variant: usize,
    pub status: CandidateStatus,
    pub sevq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub grammar: String,
    pub condition: SummaryCondition,
    #[serde(rename = "E")]
    pub e: u64,
    #[serde(rename = "T")]
    pub t: u64,
    pub ver: Option<f64>,
    pub mean_sevq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "E")]
    pub e: u64,
    #[serde(rename = "T")]
    pub t: u64,
    pub ver: f64,
    pub mean_sevq: Option<f64>,
    /// One cell per grammar and condition.
    pub breakdown: Vec<CellReport>,
    /// One cell per dataset, grammar and condition.
    pub cells: Vec<CellReport>,
    pub outcomes: Vec<RunOutcome>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell(dataset: Option<String>, grammar: &str, condition: SummaryCondition, outcomes: &[&RunOutcome]) -> CellReport {
    let t = outcomes.len() as u64;
    let e = outcomes.iter().filter(|o| o.status.is_error()).count() as u64;
    CellReport {
        dataset,
        grammar: grammar.to_string(),
        condition,
        e,
        t,
        ver: compute_ver(e, t).ok(),
        mean_sevq: mean(outcomes.iter().filter_map(|o| o.sevq)),
    }
}

impl MetricsReport {
    /// Aggregates outcomes. Cells follow the order of `datasets`,
    /// `grammars` and `conditions`; cells without runs report `T = 0`.
    pub fn from_outcomes(
        outcomes: Vec<RunOutcome>,
        datasets: &[String],
        grammars: &[String],
        conditions: &[SummaryCondition],
        warnings: Vec<String>,
    ) -> Result<Self, BenchError> {
        let t = outcomes.len() as u64;
        let e = outcomes.iter().filter(|o| o.status.is_error()).count() as u64;
        let ver = compute_ver(e, t)?;
        let mut breakdown = Vec::new();
        let mut cells = Vec::new();
        for g in grammars {
            for c in conditions {
                let sel: Vec<&RunOutcome> = outcomes.iter().filter(|o| &o.grammar == g && o.condition == *c).collect();
                breakdown.push(cell(None, g, *c, &sel));
            }
        }
        for d in datasets {
            for g in grammars {
                for c in conditions {
                    let sel: Vec<&RunOutcome> =
                        outcomes.iter().filter(|o| &o.dataset == d && &o.grammar == g && o.condition == *c).collect();
                    cells.push(cell(Some(d.clone()), g, *c, &sel));
                }
            }
        }
        Ok(Self {
            e,
            t,
            ver,
            mean_sevq: mean(outcomes.iter().filter_map(|o| o.sevq)),
            breakdown,
            cells,
            outcomes,
            warnings,
        })
    }
}

/// Loads a dataset file and profiles it.
pub fn load_summary(path: &std::path::Path, sample_n: usize, rng_seed: u64) -> Result<DatasetSummary, BenchError> {
    let wrap = |source| BenchError::Dataset { path: path.display().to_string(), source };
    let table = ingest(path, DataFormat::from_path(path)).map_err(wrap)?;
    build_base_summary(&table, sample_n, rng_seed).map_err(wrap)
}

/// Runs every scheduled visualization. Per-run failures become outcomes;
/// provider and configuration errors abort the run.
pub fn run_benchmark(
    config: &BenchmarkConfig,
    provider: &dyn TextProvider,
    generator: &VisGenerator,
) -> Result<MetricsReport, BenchError> {
    config.validate(generator)?;
    let mut outcomes = Vec::new();
    let mut warnings = Vec::new();
    let mut names = Vec::new();
    for path in &config.datasets {
        let base = load_summary(path, config.sample_n, config.rng_seed)?;
        names.push(base.name.clone());
        let enriched = if config.conditions.contains(&SummaryCondition::Enrich) {
            let e = enrich_summary(&base, provider, &config.generation).map_err(|e| match e {
                SummaryError::Provider(p) => BenchError::Provider(p),
                other => BenchError::Dataset { path: path.display().to_string(), source: other },
            })?;
            if let Some(w) = e.warning {
                warnings.push(format!("{}: enrichment failed ({w})", base.name));
            }
            e.summary
        } else {
            base.clone()
        };
        for &condition in &config.conditions {
            let summary = if condition == SummaryCondition::Enrich { &enriched } else { &base };
            let goals =
                match explore_goals(summary, condition, config.n_goals_per_dataset, provider, &config.generation) {
                    Ok(batch) => batch.goals,
                    Err(GoalError::Provider(p)) => return Err(BenchError::Provider(p)),
                    Err(other) => {
                        let msg = format!(
                            "{} [{}]: goal generation failed ({other}); no runs scheduled",
                            base.name,
                            condition.as_str()
                        );
                        tracing::warn!("{msg}");
                        warnings.push(msg);
                        continue;
                    }
                };
            for goal in &goals {
                for grammar in &config.grammars {
                    for variant in 0..config.visualizations_per_goal {
                        let key = RunKey {
                            dataset: base.name.clone(),
                            condition,
                            grammar: grammar.clone(),
                            goal_index: goal.index,
                            variant,
                        };
                        outcomes.push(run_one(config, provider, generator, summary, goal, &key)?);
                    }
                }
            }
        }
    }
    MetricsReport::from_outcomes(outcomes, &names, &config.grammars, &config.conditions, warnings)
}

fn run_one(
    config: &BenchmarkConfig,
    provider: &dyn TextProvider,
    generator: &VisGenerator,
    summary: &DatasetSummary,
    goal: &crate::goals::Goal,
    key: &RunKey,
) -> Result<RunOutcome, BenchError> {
    let tagged = TaggingProvider { inner: provider, key };
    let request =
        VisRequest { summary, condition: key.condition, goal, grammar_id: &key.grammar, policy: config.policy.clone() };
    let candidates = match generator.draw_candidates(&request, &tagged, &config.generation, &NullSink) {
        Ok(c) => c,
        Err(VisError::Provider(p)) => return Err(BenchError::Provider(p)),
        Err(other) => return Err(BenchError::Config(other.to_string())),
    };
    let first_status = candidates.first().map(|c| c.status).unwrap_or(CandidateStatus::CompileError);
    let (status, code) = match generator.select(&request, candidates, &tagged, &config.generation, &NullSink) {
        Ok(g) => (g.selected.status, Some(g.selected.assembled_code)),
        Err(VisError::NoViableCandidate { .. }) => (first_status, None),
        Err(VisError::Provider(p)) => return Err(BenchError::Provider(p)),
        Err(other) => return Err(BenchError::Config(other.to_string())),
    };
    let sevq = match (&code, config.with_sevq) {
        (Some(code), true) => {
            evaluate(code, goal, &tagged, &config.generation, Some(&key.dataset)).ok().map(|r| r.sevq)
        }
        _ => None,
    };
    Ok(RunOutcome {
        dataset: key.dataset.clone(),
        grammar: key.grammar.clone(),
        condition: key.condition,
        goal_index: key.goal_index,
        variant: key.variant,
        status,
        sevq,
    })
}

/// Adds the run's condition (and variant) to every request so recorded
/// traffic is keyed per scheduled run.
struct TaggingProvider<'a> {
    inner: &'a dyn TextProvider,
    key: &'a RunKey,
}

impl TextProvider for TaggingProvider<'_> {
    fn generate(
        &self,
        request: &crate::llm::PromptRequest,
        config: &GenerationConfig,
    ) -> Result<crate::llm::ProviderResponse, ProviderError> {
        let mut request = request.clone().with_meta("condition", self.key.condition.as_str());
        if self.key.variant > 0 {
            request = request.with_meta("variant", self.key.variant.to_string());
        }
        self.inner.generate(&request, config)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" | "markdown_table" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected json, markdown or csv)")),
        }
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["grammar", "condition", "E", "T", "ver", "mean_sevq"]).expect("in-memory write");
            for c in &report.breakdown {
                w.write_record([
                    c.grammar.clone(),
                    c.condition.as_str().to_string(),
                    c.e.to_string(),
                    c.t.to_string(),
                    opt(c.ver, 4),
                    opt(c.mean_sevq, 4),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "# Benchmark report\n");
            let _ = writeln!(out, "Overall VER: {:.1}% (E = {}, T = {})", report.ver, report.e, report.t);
            if let Some(s) = report.mean_sevq {
                let _ = writeln!(out, "Mean SEVQ: {s:.2}");
            }
            let _ = writeln!(out, "\n| grammar | condition | E | T | VER (%) | mean SEVQ |");
            let _ = writeln!(out, "|---|---|---:|---:|---:|---:|");
            for c in &report.breakdown {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    c.grammar,
                    c.condition.as_str(),
                    c.e,
                    c.t,
                    opt(c.ver, 1),
                    opt(c.mean_sevq, 2)
                );
            }
            if !report.warnings.is_empty() {
                let _ = writeln!(out, "\nWarnings:\n");
                for w in &report.warnings {
                    let _ = writeln!(out, "- {w}");
                }
            }
            out
        }
    }
}

/// Per-dataset-cell view keyed by `(dataset, grammar, condition)`.
pub fn cell_index(report: &MetricsReport) -> BTreeMap<(String, String, SummaryCondition), &CellReport> {
    report.cells.iter().map(|c| ((c.dataset.clone().unwrap_or_default(), c.grammar.clone(), c.condition), c)).collect()
}
