use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use autoviz::bench::{run_benchmark, BenchmarkConfig, ReportFormat};
use autoviz::infographer::StyleLibrary;
use autoviz::summary::SummaryCondition;
use autoviz::vis::{Executor, FilterPolicy, PolicyKind, ScaffoldLibrary, VisGenerator};
use autoviz_service::events::EventLog;
use autoviz_service::pipeline::{
    self, GoalChoice, InfographicOptions, PipelineSettings, SummaryView, VisualizationView, VisualizeInput,
};
use autoviz_service::providers::cassette_paths;
use autoviz_service::{router, spawn_sweeper, AppError, AppState, ErrorKind, ProviderMode, Providers, ServiceConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "autoviz", version, about = "Generate visualizations from datasets with language models")]
struct Cli {
    /// Text model backend. Defaults to replay when a cassette is given.
    #[arg(long, global = true, value_enum, env = "AUTOVIZ_PROVIDER")]
    provider: Option<ProviderMode>,
    /// Recorded exchanges for replay and hybrid modes (repeatable).
    #[arg(long, global = true)]
    cassette: Vec<PathBuf>,
    /// Directory of recorded image responses.
    #[arg(long, global = true)]
    image_cassette: Option<PathBuf>,
    /// JSON service/pipeline configuration.
    #[arg(long, global = true, env = "AUTOVIZ_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Print pipeline events to stderr as JSON lines.
    #[arg(long, global = true)]
    events: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Profile a dataset, optionally enriched by the model.
    Summarize(SummarizeArgs),
    /// Propose visualization goals for a dataset.
    Goals(GoalsArgs),
    /// Generate, execute and select one visualization.
    Viz(VizArgs),
    /// Operations on a freshly generated visualization.
    Ops {
        #[command(subcommand)]
        op: OpCommand,
    },
    /// Run the visualization error rate benchmark.
    Benchmark(BenchArgs),
    /// Start the HTTP/WebSocket service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    condition: Option<SummaryCondition>,
    #[arg(long)]
    sample_n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct GoalsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of goals.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    persona: Option<String>,
}

#[derive(Debug, Args)]
struct VizArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, conflicts_with = "nl_goal", required_unless_present = "nl_goal")]
    goal_index: Option<usize>,
    /// Free-text goal; skips goal exploration.
    #[arg(long)]
    nl_goal: Option<String>,
    #[arg(long, default_value = pipeline::DEFAULT_GRAMMAR)]
    grammar: String,
    #[arg(long, default_value = "compile_discard")]
    policy: PolicyKind,
    #[arg(long)]
    n_candidates: Option<u32>,
    /// Number of goals to explore before picking --goal-index.
    #[arg(long)]
    n: Option<usize>,
    /// Where generated programs and artifacts are kept.
    #[arg(long, default_value = "autoviz-runs")]
    run_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum OpCommand {
    Explain(VizArgs),
    Evaluate(VizArgs),
    Repair {
        #[command(flatten)]
        viz: VizArgs,
        #[arg(long, default_value_t = autoviz::ops::DEFAULT_REPAIR_DEPTH)]
        depth: u32,
    },
    Recommend {
        #[command(flatten)]
        viz: VizArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    Refine {
        #[command(flatten)]
        viz: VizArgs,
        #[arg(long)]
        instruction: String,
    },
    Infographic {
        #[command(flatten)]
        viz: VizArgs,
        #[arg(long = "style")]
        styles: Vec<String>,
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long)]
        strength: Option<f64>,
        #[arg(long)]
        image_seed: Option<u64>,
        /// Style library JSON; the bundled one by default.
        #[arg(long)]
        style_library: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory whose .csv and .json files form the corpus.
    #[arg(long, required_unless_present = "data", conflicts_with = "data")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    data: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "vegalite")]
    grammars: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "no_enrich,enrich,schema,no_summary")]
    conditions: Vec<SummaryCondition>,
    #[arg(long, default_value_t = 5)]
    n_goals: usize,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Also score every compiled chart on the six quality dimensions.
    #[arg(long)]
    sevq: bool,
    #[arg(long, default_value = "autoviz-runs")]
    run_dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    persist: bool,
}

struct Context {
    config: ServiceConfig,
    events: Arc<EventLog>,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, AppError> {
        let mut config = match &cli.config {
            Some(path) => ServiceConfig::load(path)?,
            None => ServiceConfig::default(),
        };
        config.apply_env()?;
        if !cli.cassette.is_empty() {
            config.providers.cassettes = cli.cassette.clone();
            config.providers.mode = ProviderMode::Replay;
        }
        if let Some(mode) = cli.provider {
            config.providers.mode = mode;
        }
        if cli.image_cassette.is_some() {
            config.providers.image_cassette = cli.image_cassette.clone();
        }
        if let Some(t) = cli.temperature {
            config.pipeline.generation.temperature = t;
        }
        let events = if cli.events {
            EventLog::with_listener(|e| eprintln!("{}", serde_json::to_string(e).expect("event serializes")))
        } else {
            EventLog::new()
        };
        Ok(Self { config, events: Arc::new(events) })
    }

    fn settings(&self, data: &DataArgs) -> PipelineSettings {
        let mut settings = self.config.pipeline.clone();
        if let Some(n) = data.sample_n {
            settings.sample_n = n;
        }
        if let Some(seed) = data.seed {
            settings.seed = seed;
        }
        if let Some(c) = data.condition {
            settings.condition = c;
        }
        settings
    }

    fn providers(&self) -> Result<Providers, AppError> {
        Providers::build(&self.config.providers)
    }

    fn generator(&self, run_dir: &Path) -> Result<VisGenerator, AppError> {
        let executor = Executor::new(run_dir)?.with_limits(self.config.exec_limits());
        Ok(VisGenerator::new(Arc::new(ScaffoldLibrary::bundled()), Arc::new(executor)))
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::internal(e.to_string()))? + "\n";
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| AppError::io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(AppError::from),
    }
}

/// Summary of a dataset under the requested condition.
fn summarize(ctx: &Context, data: &DataArgs, providers: Option<&Providers>) -> Result<SummaryView, AppError> {
    let settings = ctx.settings(data);
    let (_, base) = pipeline::load_dataset(&data.data, &settings)?;
    if settings.condition != SummaryCondition::Enrich {
        return pipeline::summarize(
            &base,
            settings.condition,
            &autoviz::llm::ScriptedProvider::unavailable(),
            &settings.generation,
            &ctx.events,
        );
    }
    let owned;
    let providers = match providers {
        Some(p) => p,
        None => {
            owned = ctx.providers()?;
            &owned
        }
    };
    providers.observe(&base);
    pipeline::summarize(&base, settings.condition, providers.text.as_ref(), &settings.generation, &ctx.events)
}

struct Generated {
    summary: SummaryView,
    view: VisualizationView,
    generator: VisGenerator,
    providers: Providers,
}

fn generate(ctx: &Context, args: &VizArgs) -> Result<Generated, AppError> {
    let settings = ctx.settings(&args.data);
    let providers = ctx.providers()?;
    let summary = summarize(ctx, &args.data, Some(&providers))?;
    let choice = GoalChoice::from_parts(args.goal_index, args.nl_goal.clone())?;
    let goals = if choice.needs_goals() {
        let n = args.n.unwrap_or(settings.n_goals);
        pipeline::explore(
            &summary.summary,
            settings.condition,
            n,
            None,
            providers.text.as_ref(),
            &settings.generation,
            &ctx.events,
        )?
        .goals
    } else {
        Vec::new()
    };
    let goal = choice.resolve(&goals)?;
    let n_candidates = args.n_candidates.unwrap_or(if args.policy == PolicyKind::CompileDiscard { 1 } else { 3 });
    let policy = FilterPolicy { kind: args.policy, n_candidates, temperature_override: None };
    let generator = ctx.generator(&args.run_dir)?;
    let input = VisualizeInput {
        summary: &summary.summary,
        condition: settings.condition,
        goal,
        grammar_id: &args.grammar,
        policy,
    };
    let view = pipeline::visualize(&generator, input, providers.text.as_ref(), &settings.generation, &ctx.events)?;
    if let Some(artifact) = &view.candidate.artifact {
        eprintln!("artifact: {}", artifact.path().display());
    }
    Ok(Generated { summary, view, generator, providers })
}

fn run_op(ctx: &Context, op: &OpCommand) -> Result<(), AppError> {
    let viz = match op {
        OpCommand::Explain(v) | OpCommand::Evaluate(v) => v,
        OpCommand::Repair { viz, .. }
        | OpCommand::Recommend { viz, .. }
        | OpCommand::Refine { viz, .. }
        | OpCommand::Infographic { viz, .. } => viz,
    };
    let out = viz.data.out.as_deref();
    let g = generate(ctx, viz)?;
    let config = &ctx.config.pipeline.generation;
    let text = g.providers.text.as_ref();
    let summary = &g.summary.summary;
    let candidate = &g.view.candidate;
    match op {
        OpCommand::Explain(_) => {
            emit(&pipeline::explain_step(&candidate.assembled_code, &summary.name, text, config, &ctx.events)?, out)
        }
        OpCommand::Evaluate(_) => emit(
            &pipeline::evaluate_step(
                &candidate.assembled_code,
                &g.view.goal,
                &summary.name,
                text,
                config,
                &ctx.events,
            )?,
            out,
        ),
        OpCommand::Repair { depth, .. } => emit(
            &pipeline::repair_step(
                &g.generator,
                summary,
                candidate,
                &g.view.goal,
                None,
                *depth,
                text,
                config,
                &ctx.events,
            )?,
            out,
        ),
        OpCommand::Recommend { k, .. } => {
            emit(&pipeline::recommend_step(summary, &g.view.goal, *k, text, config, &ctx.events)?, out)
        }
        OpCommand::Refine { instruction, .. } => {
            let mut session =
                autoviz::ops::RefinementSession::new(g.view.goal.clone(), summary.name.clone(), candidate.clone())?;
            let view =
                pipeline::refine_step(&g.generator, summary, &mut session, instruction, text, config, &ctx.events)?;
            emit(&view, out)
        }
        OpCommand::Infographic { styles, prompt, strength, image_seed, style_library, .. } => {
            let library = match style_library {
                Some(path) => StyleLibrary::load(path)?,
                None => StyleLibrary::bundled(),
            };
            let options = InfographicOptions {
                style_ids: styles.clone(),
                custom_prompt: prompt.clone(),
                strength: *strength,
                seed: *image_seed,
            };
            let target =
                viz.run_dir.join("infographics").join(format!("{}-{}.png", summary.name, candidate.goal_index));
            let view = pipeline::infographic_step(
                candidate,
                &library,
                &options,
                g.providers.image.as_ref(),
                &target,
                &ctx.events,
            )?;
            eprintln!("artifact: {}", view.image.path.display());
            emit(&view, out)
        }
    }
}

fn benchmark(ctx: &Context, args: &BenchArgs) -> Result<(), AppError> {
    let datasets = match &args.corpus {
        Some(dir) => {
            let paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| AppError::validation("bad_corpus", format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
                .collect();
            let mut paths = paths;
            paths.sort();
            paths
        }
        None => args.data.clone(),
    };
    let config = BenchmarkConfig {
        datasets,
        n_goals_per_dataset: args.n_goals,
        grammars: args.grammars.clone(),
        conditions: args.conditions.clone(),
        with_sevq: args.sevq,
        generation: ctx.config.pipeline.generation.clone(),
        ..BenchmarkConfig::default()
    };
    let providers = ctx.providers()?;
    let generator = ctx.generator(&args.run_dir)?;
    let report = run_benchmark(&config, providers.text.as_ref(), &generator)?;
    let text = autoviz::bench::emit_report(&report, args.format);
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| AppError::io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(AppError::from),
    }
}

fn serve(ctx: Context, args: &ServeArgs) -> Result<(), AppError> {
    let mut config = ctx.config;
    if let Some(bind) = &args.bind {
        config.bind = bind.clone();
    }
    if let Some(dir) = &args.data_dir {
        config.data_dir = dir.clone();
    }
    config.persist_sessions |= args.persist;
    if config.providers.mode != ProviderMode::Fixture && config.providers.cassettes.is_empty() {
        if let Ok(paths) = cassette_paths(&config.data_dir.join("cassettes")) {
            config.providers.cassettes = paths;
        }
    }
    let providers = Providers::build(&config.providers)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let bind = config.bind.clone();
        let sweep_every = config.session_ttl().min(std::time::Duration::from_secs(60));
        let state = AppState::new(config, providers)?;
        spawn_sweeper(state.clone(), sweep_every);
        let listener = tokio::net::TcpListener::bind(&bind).await?;
        tracing::info!(address = %listener.local_addr()?, "listening");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(AppError::from)
    })
}

fn run(cli: Cli) -> Result<(), AppError> {
    let ctx = Context::new(&cli)?;
    ctx.config.validate()?;
    match &cli.command {
        Command::Summarize(args) => emit(&summarize(&ctx, &args.data, None)?, args.data.out.as_deref()),
        Command::Goals(args) => {
            let settings = ctx.settings(&args.data);
            let providers = ctx.providers()?;
            let summary = summarize(&ctx, &args.data, Some(&providers))?;
            let n = args.n.unwrap_or(settings.n_goals);
            let goals = pipeline::explore(
                &summary.summary,
                settings.condition,
                n,
                args.persona.as_deref(),
                providers.text.as_ref(),
                &settings.generation,
                &ctx.events,
            )?;
            emit(&goals, args.data.out.as_deref())
        }
        Command::Viz(args) => {
            let g = generate(&ctx, args)?;
            emit(&g.view, args.data.out.as_deref())
        }
        Command::Ops { op } => run_op(&ctx, op),
        Command::Benchmark(args) => benchmark(&ctx, args),
        Command::Serve(args) => serve(ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", e.class, e.message);
            if let Some(detail) = &e.detail {
                eprintln!("{detail}");
            }
            let code = if e.kind == ErrorKind::Usage { 2 } else { e.kind.exit_code() };
            ExitCode::from(code)
        }
    }
}
