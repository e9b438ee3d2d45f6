//! Scenarios shared by the cassette recorder and the replay tests. The
//! recorder runs them against the fixture model; replay tests run the same
//! code against the recorded cassettes, so requests match byte for byte.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use autoviz::bench::BenchmarkConfig;
use autoviz::goals::{explore_goals, Goal};
use autoviz::llm::{Cassette, GenerationConfig, ReplayProvider, TextProvider};
use autoviz::ops::{
    evaluate, explain, recommend, refine, repair, EvaluationReport, ExecContext, Explanation, RecommendContext,
    RefinementSession, RefinementTurn, RepairOutcome, DEFAULT_REPAIR_DEPTH,
};
use autoviz::summary::{
    build_base_summary, enrich_summary, ingest, DataFormat, DatasetSummary, SummaryCondition, DEFAULT_SAMPLE_N,
};
use autoviz::vis::{CandidateProgram, Executor, FilterPolicy, ScaffoldLibrary, VisGenerator, VisRequest};

pub const BENCHMARK_CASSETTE: &str = "benchmark.json";
pub const CARS_CASSETTE: &str = "cars_e2e.json";
pub const DATASETS: [&str; 5] = ["cars", "gapminder", "iris", "stocks", "weather"];

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("repo root")
}

pub fn datasets_dir() -> PathBuf {
    repo_root().join("fixtures/datasets")
}

pub fn cassette_path(name: &str) -> PathBuf {
    repo_root().join("fixtures/cassettes").join(name)
}

pub fn dataset_path(name: &str) -> PathBuf {
    datasets_dir().join(format!("{name}.csv"))
}

pub fn replay(name: &str) -> ReplayProvider {
    ReplayProvider::new(Cassette::load(cassette_path(name)).expect("cassette present; run the recorder"))
}

pub fn generator(run_root: &Path) -> VisGenerator {
    VisGenerator::new(Arc::new(ScaffoldLibrary::bundled()), Arc::new(Executor::new(run_root).expect("run root")))
}

pub fn ablation_config() -> BenchmarkConfig {
    BenchmarkConfig {
        datasets: DATASETS.iter().map(|d| dataset_path(d)).collect(),
        grammars: vec!["vegalite".into()],
        conditions: SummaryCondition::ALL.to_vec(),
        ..BenchmarkConfig::default()
    }
}

pub fn base_summary(name: &str) -> DatasetSummary {
    let table = ingest(dataset_path(name), DataFormat::Csv).expect("bundled dataset");
    build_base_summary(&table, DEFAULT_SAMPLE_N, 0).expect("profile")
}

pub const PIE_GOAL: &str = "pie chart of the count of records by `Origin`";
pub const NL_GOAL: &str = "what is the fuel efficiency per country?";
pub const TITLE_INSTRUCTION: &str = "change the chart title to Fuel efficiency by origin";

/// Everything the cars walkthrough produces.
pub struct CarsRun {
    pub summary: DatasetSummary,
    pub goals: Vec<Goal>,
    pub selected: CandidateProgram,
    pub report: EvaluationReport,
    pub repair: RepairOutcome,
    pub repaired_report: EvaluationReport,
    pub matplotlib: CandidateProgram,
    pub nl_goal: CandidateProgram,
    pub pie: CandidateProgram,
    pub pie_report: EvaluationReport,
    pub pie_repair: RepairOutcome,
    pub refinement: RefinementTurn,
    pub explanation: Explanation,
    pub recommendations: Vec<Goal>,
}

/// Upload, summarize, explore, visualize, evaluate and repair on the cars
/// dataset, plus the other operations on the same session.
pub fn cars_walkthrough(provider: &dyn TextProvider, gen: &VisGenerator) -> CarsRun {
    let config = GenerationConfig::default();
    let base = base_summary("cars");
    let summary = enrich_summary(&base, provider, &config).expect("enrich").summary;
    let goals = explore_goals(&summary, SummaryCondition::Enrich, 5, provider, &config).expect("goals").goals;
    let dataset = VisGenerator::dataset_ref(&summary);
    let ctx = ExecContext { generator: gen, dataset: &dataset, dataset_name: &summary.name };

    let visualize = |goal: &Goal, grammar: &str| {
        let request = VisRequest {
            summary: &summary,
            condition: SummaryCondition::Enrich,
            goal,
            grammar_id: grammar,
            policy: FilterPolicy::compile_discard(1),
        };
        gen.generate(&request, provider, &config).expect("generation").selected
    };

    let selected = visualize(&goals[0], "vegalite");
    let report =
        evaluate(&selected.assembled_code, &goals[0], provider, &config, Some(&summary.name)).expect("evaluate");
    let repair_outcome =
        repair(&selected, &report, &goals[0], &ctx, provider, &config, DEFAULT_REPAIR_DEPTH).expect("repair");
    let repaired_report =
        evaluate(&repair_outcome.repaired.assembled_code, &goals[0], provider, &config, Some(&summary.name))
            .expect("evaluate");

    let matplotlib = visualize(&goals[0], "matplotlib");
    let nl_goal = visualize(&Goal::user_provided(0, NL_GOAL), "vegalite");

    let pie_goal = Goal::user_provided(0, PIE_GOAL);
    let pie = visualize(&pie_goal, "vegalite");
    let pie_report =
        evaluate(&pie.assembled_code, &pie_goal, provider, &config, Some(&summary.name)).expect("evaluate");
    let pie_repair =
        repair(&pie, &pie_report, &pie_goal, &ctx, provider, &config, DEFAULT_REPAIR_DEPTH).expect("repair");

    let mut session =
        RefinementSession::new(goals[0].clone(), summary.name.clone(), selected.clone()).expect("session");
    let refinement = refine(&mut session, TITLE_INSTRUCTION, &ctx, provider, &config).expect("refine");
    let explanation = explain(&selected.assembled_code, provider, &config, Some(&summary.name)).expect("explain");
    let scatter = goals.iter().find(|g| g.visualization.starts_with("scatter")).expect("a scatter goal").clone();
    let recommendations =
        recommend(&summary, &RecommendContext::Goal(scatter), 3, provider, &config).expect("recommend").goals;

    CarsRun {
        summary,
        goals,
        selected,
        report,
        repair: repair_outcome,
        repaired_report,
        matplotlib,
        nl_goal,
        pie,
        pie_report,
        pie_repair,
        refinement,
        explanation,
        recommendations,
    }
}
