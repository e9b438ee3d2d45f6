//! Deterministic heuristic models for authoring replay cassettes and for
//! offline demos. Replies are derived from the request metadata and the
//! dataset profile, never from randomness.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::PathBuf;
use std::sync::RwLock;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::bench::load_summary;
use crate::infographer::ImageProvider;
use crate::llm::{Message, PromptRequest, ProviderError, ProviderResponse, Role, TextProvider};
use crate::summary::{AtomicType, DatasetSummary, FieldProfile, DEFAULT_SAMPLE_N};

/// Text model that answers every pipeline task with a plausible,
/// executable reply.
pub struct FixtureModel {
    data_dir: Option<PathBuf>,
    guess_without_summary: bool,
    summaries: RwLock<HashMap<String, DatasetSummary>>,
}

impl Default for FixtureModel {
    fn default() -> Self {
        Self::new()
    }
}

impl FixtureModel {
    pub fn new() -> Self {
        Self { data_dir: None, guess_without_summary: false, summaries: RwLock::new(HashMap::new()) }
    }

    /// Datasets not registered explicitly are looked up as
    /// `{dir}/{name}.csv` (or `.json`) and profiled with default settings.
    pub fn with_data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.data_dir = Some(dir.into());
        self
    }

    /// When a codegen prompt carries no dataset summary, misspell the
    /// category field for every third goal, the way a model that cannot
    /// see the schema would.
    pub fn guessing_without_summary(mut self) -> Self {
        self.guess_without_summary = true;
        self
    }

    pub fn with_dataset(self, summary: DatasetSummary) -> Self {
        self.register(summary);
        self
    }

    pub fn register(&self, summary: DatasetSummary) {
        self.summaries.write().expect("summary lock").insert(summary.name.clone(), summary);
    }

    fn summary(&self, request: &PromptRequest) -> Result<DatasetSummary, ProviderError> {
        let name = request.meta("dataset").ok_or_else(|| {
            ProviderError::MalformedRequest("fixture model needs a dataset in the request meta".into())
        })?;
        if let Some(s) = self.summaries.read().expect("summary lock").get(name) {
            return Ok(s.clone());
        }
        let dir =
            self.data_dir.as_ref().ok_or_else(|| ProviderError::Unavailable(format!("unknown dataset {name:?}")))?;
        let path =
            ["csv", "json"].iter().map(|ext| dir.join(format!("{name}.{ext}"))).find(|p| p.exists()).ok_or_else(
                || ProviderError::Unavailable(format!("dataset {name:?} not found in {}", dir.display())),
            )?;
        let summary =
            load_summary(&path, DEFAULT_SAMPLE_N, 0).map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        self.register(summary.clone());
        Ok(summary)
    }

    fn reply(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        let task = request.meta("task").unwrap_or_default();
        let body = last_user(request);
        match task {
            "enrich_summary" => Ok(enrich_reply(&self.summary(request)?)),
            "goals" => {
                let n = request.meta("n_goals").and_then(|n| n.parse().ok()).unwrap_or(5);
                Ok(goals_json(&goal_specs(&self.summary(request)?), 0, n))
            }
            "recommend" => {
                let k: usize = request.meta("k").and_then(|n| n.parse().ok()).unwrap_or(3);
                Ok(goals_json(&goal_specs(&self.summary(request)?), 1, k + 1))
            }
            "codegen" => {
                let summary = self.summary(request)?;
                let vis = line_after(body, "Visualization: ").unwrap_or_default();
                let mut plan = ChartPlan::from_text(vis, &summary);
                if self.guess_without_summary && !body.contains("Dataset summary:") {
                    let key = format!("{}|{}", summary.name, request.meta("goal_index").unwrap_or_default());
                    if Sha256::digest(key.as_bytes())[0] % 3 == 0 {
                        plan.x = guessed_name(&plan.x);
                    }
                }
                Ok(fenced(&render(&plan, grammar(request)?)))
            }
            "repair" => {
                let summary = self.summary(request)?;
                let vis = line_after(body, "Visualization goal: ").unwrap_or_default();
                let mut plan = ChartPlan::from_text(vis, &summary);
                if plan.kind == Kind::Pie {
                    plan.kind = Kind::Bar;
                }
                plan.title = format!("{} (revised)", plan.title);
                Ok(fenced(&render(&plan, grammar(request)?)))
            }
            "refine" => {
                let stub = current_stub(body).unwrap_or_default();
                let instruction = body.rsplit("Instruction: ").next().unwrap_or_default();
                let instruction = instruction.split("\n\n").next().unwrap_or_default().trim();
                let grammar = grammar(request)?;
                Ok(match requested_title(instruction) {
                    Some(title) => set_title(&stub, &title, grammar),
                    None => stub,
                })
            }
            "score_correctness" => {
                let digest = Sha256::digest(body.as_bytes());
                Ok(format!("{:.2}", 0.5 + f64::from(digest[0] % 50) / 100.0))
            }
            "evaluate" => Ok(evaluate_reply(request.meta("dimension").unwrap_or_default(), body)),
            "explain" => Ok(explain_reply(body)),
            other => Err(ProviderError::MalformedRequest(format!("fixture model has no reply for task {other:?}"))),
        }
    }
}

impl TextProvider for FixtureModel {
    fn generate(
        &self,
        request: &PromptRequest,
        config: &crate::llm::GenerationConfig,
    ) -> Result<ProviderResponse, ProviderError> {
        let text = self.reply(request)?;
        Ok(ProviderResponse::new(vec![text; config.n_candidates.max(1) as usize]))
    }

    fn name(&self) -> &str {
        "fixture"
    }
}

fn last_user(request: &PromptRequest) -> &str {
    request
        .messages
        .iter()
        .rev()
        .find(|m: &&Message| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or_default()
}

fn grammar(request: &PromptRequest) -> Result<&str, ProviderError> {
    request.meta("grammar").ok_or_else(|| ProviderError::MalformedRequest("request has no grammar".into()))
}

fn line_after<'a>(body: &'a str, prefix: &str) -> Option<&'a str> {
    body.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

fn current_stub(body: &str) -> Option<String> {
    let start = body.rfind("Current stub:\n```\n")? + "Current stub:\n```\n".len();
    let end = body[start..].find("\n```")?;
    Some(body[start..start + end].to_string())
}

fn guessed_name(field: &str) -> String {
    let lower = field.to_lowercase().replace('_', " ");
    if lower == field {
        format!("{field}s")
    } else {
        lower
    }
}

fn fenced(code: &str) -> String {
    format!("```\n{code}\n```")
}

fn requested_title(instruction: &str) -> Option<String> {
    let lower = instruction.to_lowercase();
    let at = lower.find("title to ").map(|i| i + "title to ".len())?;
    let title = instruction[at..].trim().trim_end_matches('.').trim_matches(['"', '\'', '`']);
    (!title.is_empty()).then(|| title.to_string())
}

fn set_title(stub: &str, title: &str, grammar: &str) -> String {
    if grammar == "vegalite" {
        let Ok(Value::Object(mut obj)) = serde_json::from_str::<Value>(&format!("{{{stub}}}")) else {
            return stub.to_string();
        };
        obj.insert("title".into(), json!(title));
        return vegalite_stub(&obj);
    }
    let line = format!("    plt.title({})", json!(title));
    let mut lines: Vec<String> = stub.lines().map(str::to_string).collect();
    match lines.iter().position(|l| l.trim_start().starts_with("plt.title(")) {
        Some(i) => lines[i] = line,
        None => lines.push(line),
    }
    lines.join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Bar,
    Scatter,
    Line,
    Histogram,
    Pie,
}

#[derive(Debug, Clone, PartialEq)]
struct ChartPlan {
    kind: Kind,
    /// Category, time or first numeric field.
    x: String,
    /// Measured field; `None` counts rows.
    y: Option<String>,
    color: Option<String>,
    aggregate: &'static str,
    title: String,
    x_type: &'static str,
}

fn vl_type(field: &FieldProfile) -> &'static str {
    match field.atomic_type {
        AtomicType::Integer | AtomicType::Float => "quantitative",
        AtomicType::Date => "temporal",
        _ => "nominal",
    }
}

fn is_category(f: &FieldProfile) -> bool {
    matches!(f.atomic_type, AtomicType::String | AtomicType::Boolean) && f.stats.n_unique <= 20
}

impl ChartPlan {
    fn from_text(vis: &str, summary: &DatasetSummary) -> Self {
        let lower = vis.to_lowercase();
        let mut fields: Vec<&FieldProfile> =
            crate::goals::explicit_references(vis).iter().filter_map(|n| summary.field(n)).collect();
        fields.dedup_by(|a, b| a.name == b.name);
        if fields.is_empty() {
            let cat = summary.fields.iter().filter(|f| is_category(f)).min_by_key(|f| f.stats.n_unique);
            let num = summary.fields.iter().find(|f| f.atomic_type.is_numeric());
            fields = cat.into_iter().chain(num).collect();
        }
        let kind = if lower.contains("pie") {
            Kind::Pie
        } else if lower.contains("scatter") {
            Kind::Scatter
        } else if lower.contains("line") {
            Kind::Line
        } else if lower.contains("histogram") || lower.contains("distribution") {
            Kind::Histogram
        } else {
            Kind::Bar
        };
        let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
        let has = |w: &str| words.contains(&w);
        let aggregate = if has("max") || has("maximum") || has("highest") {
            "max"
        } else if has("sum") || has("total") {
            "sum"
        } else if has("count") || has("counts") || lower.contains("number of") {
            "count"
        } else {
            "mean"
        };
        let numeric: Vec<&FieldProfile> = fields.iter().copied().filter(|f| f.atomic_type.is_numeric()).collect();
        let other: Vec<&FieldProfile> = fields.iter().copied().filter(|f| !f.atomic_type.is_numeric()).collect();
        let first = fields.first().copied().or_else(|| summary.fields.first()).expect("summary has fields");
        let (x, y, color) = match kind {
            Kind::Scatter => {
                let x = numeric.first().copied().unwrap_or(first);
                (x, numeric.get(1).copied(), other.first().copied())
            }
            Kind::Line => {
                let x = other.iter().copied().find(|f| f.atomic_type == AtomicType::Date).unwrap_or(first);
                let color = other.iter().copied().find(|f| f.name != x.name && is_category(f));
                (x, numeric.iter().copied().find(|f| f.name != x.name), color)
            }
            Kind::Histogram => (numeric.first().copied().unwrap_or(first), None, None),
            Kind::Bar | Kind::Pie => {
                let x = other.first().copied().unwrap_or(first);
                let y = numeric.iter().copied().find(|f| f.name != x.name);
                (x, if aggregate == "count" { None } else { y }, None)
            }
        };
        let y_name = y.map(|f| f.name.clone());
        let title = match (kind, &y_name) {
            (Kind::Scatter, Some(y)) => format!("{y} vs {}", x.name),
            (Kind::Histogram, _) => format!("Distribution of {}", x.name),
            (_, Some(y)) => {
                format!("{} {y} by {}", capitalize(if kind == Kind::Line { "mean" } else { aggregate }), x.name)
            }
            (_, None) => format!("Count by {}", x.name),
        };
        Self {
            kind,
            x: x.name.clone(),
            y: y_name,
            color: color.map(|f| f.name.clone()),
            aggregate: if kind == Kind::Line { "mean" } else { aggregate },
            title,
            x_type: vl_type(x),
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn render(plan: &ChartPlan, grammar: &str) -> String {
    match grammar {
        "vegalite" => vegalite_stub(&vegalite_spec(plan)),
        "seaborn" => python_stub(plan, true),
        _ => python_stub(plan, false),
    }
}

fn vegalite_stub(obj: &Map<String, Value>) -> String {
    obj.iter().map(|(k, v)| format!("  {}: {}", json!(k), v)).collect::<Vec<_>>().join(",\n")
}

fn vegalite_spec(plan: &ChartPlan) -> Map<String, Value> {
    let measure = match &plan.y {
        Some(y) => {
            json!({"field": y, "type": "quantitative", "aggregate": plan.aggregate, "title": format!("{} of {y}", plan.aggregate)})
        }
        None => json!({"aggregate": "count", "type": "quantitative", "title": "count"}),
    };
    let (mark, encoding) = match plan.kind {
        Kind::Bar => ("bar", json!({"x": {"field": plan.x, "type": plan.x_type, "sort": "-y"}, "y": measure})),
        Kind::Pie => ("arc", json!({"theta": measure, "color": {"field": plan.x, "type": "nominal"}})),
        Kind::Scatter => {
            let mut enc = json!({
                "x": {"field": plan.x, "type": "quantitative"},
                "y": {"field": plan.y.clone().unwrap_or_else(|| plan.x.clone()), "type": "quantitative"}
            });
            if let Some(c) = &plan.color {
                enc["color"] = json!({"field": c, "type": "nominal"});
            }
            ("point", enc)
        }
        Kind::Line => {
            let mut enc = json!({"x": {"field": plan.x, "type": plan.x_type}, "y": measure});
            if let Some(c) = &plan.color {
                enc["color"] = json!({"field": c, "type": "nominal"});
            }
            ("line", enc)
        }
        Kind::Histogram => (
            "bar",
            json!({"x": {"field": plan.x, "type": "quantitative", "bin": {"maxbins": 20}}, "y": {"aggregate": "count", "type": "quantitative"}}),
        ),
    };
    let mut obj = Map::new();
    obj.insert("title".into(), json!(plan.title));
    obj.insert("mark".into(), json!(mark));
    obj.insert("encoding".into(), encoding);
    obj
}

fn py(s: &str) -> String {
    json!(s).to_string()
}

fn python_stub(plan: &ChartPlan, seaborn: bool) -> String {
    let x = py(&plan.x);
    let mut lines: Vec<String> = vec!["plt.figure(figsize=(8, 5))".into()];
    let ylabel = match (plan.kind, &plan.y) {
        (Kind::Scatter, y) => {
            let y = py(y.as_deref().unwrap_or(&plan.x));
            if seaborn {
                let hue = plan.color.as_deref().map(|c| format!(", hue={}", py(c))).unwrap_or_default();
                lines.push(format!("sns.scatterplot(data=data, x={x}, y={y}{hue})"));
            } else {
                lines.push(format!("plt.scatter(data[{x}], data[{y}], alpha=0.7)"));
            }
            plan.y.clone().unwrap_or_else(|| plan.x.clone())
        }
        (Kind::Line, y) => {
            let y = py(y.as_deref().unwrap_or(&plan.x));
            lines.push("frame = data.copy()".into());
            if plan.x_type == "temporal" {
                lines.push(format!("frame[{x}] = pd.to_datetime(frame[{x}])"));
            }
            match &plan.color {
                Some(c) if seaborn => {
                    lines.push(format!("sns.lineplot(data=frame, x={x}, y={y}, hue={}, errorbar=None)", py(c)))
                }
                None if seaborn => lines.push(format!("sns.lineplot(data=frame, x={x}, y={y}, errorbar=None)")),
                Some(c) => {
                    lines.push(format!("for key, group in frame.groupby({}):", py(c)));
                    lines.push(format!("    series = group.groupby({x})[{y}].mean()"));
                    lines.push("    plt.plot(series.index, series.values, label=str(key))".into());
                    lines.push("plt.legend()".into());
                }
                None => {
                    lines.push(format!("series = frame.groupby({x})[{y}].mean()"));
                    lines.push("plt.plot(series.index, series.values)".into());
                }
            }
            format!("mean of {}", plan.y.as_deref().unwrap_or(&plan.x))
        }
        (Kind::Histogram, _) => {
            if seaborn {
                lines.push(format!("sns.histplot(data=data, x={x}, bins=20)"));
            } else {
                lines.push(format!("plt.hist(data[{x}].dropna(), bins=20, color=\"steelblue\")"));
            }
            "count".into()
        }
        (kind, y) => {
            match y {
                Some(y) => lines.insert(
                    0,
                    format!("values = data.groupby({x})[{}].{}().sort_values(ascending=False)", py(y), plan.aggregate),
                ),
                None => lines.insert(0, format!("values = data[{x}].value_counts()")),
            }
            if kind == Kind::Pie {
                lines.push("plt.pie(values.values, labels=values.index.astype(str), autopct=\"%1.0f%%\")".into());
            } else if seaborn {
                lines.push("sns.barplot(x=values.index.astype(str), y=values.values, color=\"steelblue\")".into());
            } else {
                lines.push("plt.bar(values.index.astype(str), values.values, color=\"steelblue\")".into());
                lines.push("plt.xticks(rotation=45, ha=\"right\")".into());
            }
            match y {
                Some(y) => format!("{} of {y}", plan.aggregate),
                None => "count".into(),
            }
        }
    };
    if plan.kind != Kind::Pie {
        lines.push(format!("plt.xlabel({x})"));
        lines.push(format!("plt.ylabel({})", py(&ylabel)));
    }
    lines.push(format!("plt.title({})", py(&plan.title)));
    lines.iter().map(|l| format!("    {l}")).collect::<Vec<_>>().join("\n")
}

fn enrich_reply(summary: &DatasetSummary) -> String {
    let fields: Vec<Value> = summary
        .fields
        .iter()
        .map(|f| {
            let semantic = match f.atomic_type {
                AtomicType::Integer | AtomicType::Float => "number",
                AtomicType::Date => "date",
                AtomicType::Boolean => "flag",
                _ if f.stats.n_unique == f.stats.n_rows => "name",
                _ => "category",
            };
            json!({
                "name": f.name,
                "description": format!("The {} of each record.", f.name.replace('_', " ").to_lowercase()),
                "semantic_type": semantic,
            })
        })
        .collect();
    let doc = json!({
        "name": summary.name,
        "dataset_description": format!("A table of {} records with {} fields about {}.", summary.row_count, summary.fields.len(), summary.name),
        "fields": fields,
    });
    serde_json::to_string_pretty(&doc).expect("json")
}

struct GoalSpec {
    question: String,
    visualization: String,
    rationale: String,
}

fn goal_specs(summary: &DatasetSummary) -> Vec<GoalSpec> {
    let numeric: Vec<&str> =
        summary.fields.iter().filter(|f| f.atomic_type.is_numeric()).map(|f| f.name.as_str()).collect();
    let cats: Vec<&str> = summary.fields.iter().filter(|f| is_category(f)).map(|f| f.name.as_str()).collect();
    let dates: Vec<&str> =
        summary.fields.iter().filter(|f| f.atomic_type == AtomicType::Date).map(|f| f.name.as_str()).collect();

    let mut bars = Vec::new();
    for c in &cats {
        for n in &numeric {
            bars.push(GoalSpec {
                question: format!("How does the average `{n}` vary across `{c}`?"),
                visualization: format!("bar chart of mean `{n}` by `{c}`"),
                rationale: format!("Comparing mean `{n}` per `{c}` shows which groups stand out."),
            });
        }
    }
    let mut scatters = Vec::new();
    for (i, a) in numeric.iter().enumerate() {
        for b in numeric.iter().skip(i + 1) {
            scatters.push(GoalSpec {
                question: format!("What is the relationship between `{a}` and `{b}`?"),
                visualization: format!("scatter plot of `{a}` vs `{b}`"),
                rationale: format!("A scatter plot reveals whether `{a}` and `{b}` are correlated."),
            });
        }
    }
    let mut lines = Vec::new();
    for d in &dates {
        for n in &numeric {
            let by = cats.first().map(|c| format!(" for each `{c}`")).unwrap_or_default();
            lines.push(GoalSpec {
                question: format!("How does `{n}` change over `{d}`{by}?"),
                visualization: format!(
                    "line chart of `{n}` over `{d}`{}",
                    cats.first().map(|c| format!(" colored by `{c}`")).unwrap_or_default()
                ),
                rationale: format!("A line chart over `{d}` exposes trends and seasonality in `{n}`."),
            });
        }
    }
    let hists: Vec<GoalSpec> = numeric
        .iter()
        .map(|n| GoalSpec {
            question: format!("What is the distribution of `{n}`?"),
            visualization: format!("histogram of `{n}`"),
            rationale: format!("A histogram shows the spread, skew and outliers of `{n}`."),
        })
        .collect();
    let counts: Vec<GoalSpec> = cats
        .iter()
        .map(|c| GoalSpec {
            question: format!("How many records fall into each `{c}`?"),
            visualization: format!("bar chart of the count of records by `{c}`"),
            rationale: format!("Counting records per `{c}` shows how balanced the groups are."),
        })
        .collect();

    let mut extremes = Vec::new();
    for c in &cats {
        for n in &numeric {
            extremes.push(GoalSpec {
                question: format!("Which `{c}` reaches the highest `{n}`?"),
                visualization: format!("bar chart of max `{n}` by `{c}`"),
                rationale: format!("The maximum `{n}` per `{c}` highlights the extremes of each group."),
            });
        }
    }

    let mut pools = [bars, scatters, lines, hists, counts, extremes].map(|p| p.into_iter());
    let mut out = Vec::new();
    loop {
        let before = out.len();
        for pool in pools.iter_mut() {
            out.extend(pool.next());
        }
        if out.len() == before {
            break;
        }
    }
    out
}

fn goals_json(specs: &[GoalSpec], skip: usize, n: usize) -> String {
    let items: Vec<Value> = specs
        .iter()
        .cycle()
        .skip(skip)
        .take(n.min(specs.len()))
        .map(|g| json!({"question": g.question, "visualization": g.visualization, "rationale": g.rationale}))
        .collect();
    format!("```json\n{}\n```", serde_json::to_string_pretty(&items).expect("json"))
}

fn code_block(body: &str) -> &str {
    body.find("```\n").and_then(|s| body[s + 4..].find("\n```").map(|e| &body[s + 4..s + 4 + e])).unwrap_or(body)
}

fn is_pie(code: &str) -> bool {
    code.contains("\"arc\"") || code.contains("plt.pie(") || code.contains("\"theta\"")
}

fn evaluate_reply(dimension: &str, body: &str) -> String {
    let code = code_block(body);
    let pie = is_pie(code);
    let titled = code.contains("title");
    match dimension {
        "code_accuracy" => "9: The code is syntactically valid and free of obvious bugs.".into(),
        "data_transformation" => "8: Aggregations match the fields named in the goal.".into(),
        "goal_compliance" if pie => "6: The chart answers the goal, but comparing slices is imprecise.".into(),
        "goal_compliance" => "9: The chart answers the stated goal directly.".into(),
        "visualization_type" if pie => {
            "3: A pie chart makes it hard to compare the categories; a bar chart is recommended instead.".into()
        }
        "visualization_type" => "9: The chart type suits the data types involved.".into(),
        "data_encoding" if pie => "5: Quantities are encoded as angles, which are hard to read.".into(),
        "data_encoding" => "8: Fields are mapped to appropriate channels.".into(),
        "aesthetics" if titled => "8: The chart has a title and readable labels.".into(),
        "aesthetics" => "6: The chart lacks a descriptive title.".into(),
        other => format!("5: No specific guidance for {other}."),
    }
}

fn explain_reply(body: &str) -> String {
    let code = code_block(body);
    let kind = if is_pie(code) {
        "pie chart"
    } else if code.contains("\"line\"") || code.contains("plt.plot(") || code.contains("lineplot") {
        "line chart"
    } else if code.contains("\"point\"") || code.contains("scatter") {
        "scatter plot"
    } else if code.contains("\"bin\"") || code.contains("hist") {
        "histogram"
    } else {
        "bar chart"
    };
    let mut fields: Vec<String> = Vec::new();
    for part in code.split('"').skip(1).step_by(2) {
        if (!part.is_empty()
            && part.chars().all(|c| c.is_alphanumeric() || c == '_')
            && part.chars().any(char::is_uppercase)
            || part.contains('_'))
            && !fields.iter().any(|f| f == part)
        {
            fields.push(part.to_string());
        }
    }
    let mentioned = if fields.is_empty() { "the dataset fields".to_string() } else { fields.join(", ") };
    format!(
        "## Code walkthrough\nThe code draws a {kind}. It maps {mentioned} to visual channels and sets a title and axis labels.\n\n\
## Accessibility description\nA {kind} built from {mentioned}. Each mark represents one group or record of the dataset."
    )
}

/// Image model that tints the input toward a colour derived from the
/// prompt and returns it at 1.5x the size.
pub struct FixtureImageModel;

impl ImageProvider for FixtureImageModel {
    fn stylize(&self, png: &[u8], prompt: &str, strength: f64, seed: Option<u64>) -> Result<Vec<u8>, ProviderError> {
        let img = image::load_from_memory(png).map_err(|e| ProviderError::MalformedRequest(e.to_string()))?;
        let digest = Sha256::digest(format!("{prompt}|{}", seed.unwrap_or(0)).as_bytes());
        let tint = [digest[0], digest[1], digest[2]];
        let mut rgb = img.to_rgb8();
        for px in rgb.pixels_mut() {
            for (c, t) in px.0.iter_mut().zip(tint) {
                *c = (f64::from(*c) * (1.0 - strength) + f64::from(t) * strength).round() as u8;
            }
        }
        let (w, h) = rgb.dimensions();
        let out = image::imageops::resize(&rgb, w * 3 / 2, h * 3 / 2, image::imageops::FilterType::Triangle);
        let mut bytes = Vec::new();
        out.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(bytes)
    }

    fn name(&self) -> &str {
        "fixture-image"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summary::{build_base_summary, ingest, DataFormat};

    fn cars() -> DatasetSummary {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/datasets/cars.csv");
        build_base_summary(&ingest(path, DataFormat::Csv).unwrap(), 5, 0).unwrap()
    }

    #[test]
    fn nl_goal_without_fields_picks_category_and_measure() {
        let p = ChartPlan::from_text("what is the fuel efficiency per country?", &cars());
        assert_eq!((p.kind, p.x.as_str(), p.y.as_deref()), (Kind::Bar, "Origin", Some("Miles_per_Gallon")));
    }

    #[test]
    fn goal_specs_are_varied() {
        let specs = goal_specs(&cars());
        assert!(specs.len() >= 5);
        assert!(specs[0].visualization.starts_with("bar chart"));
        assert!(specs[1].visualization.starts_with("scatter"));
    }

    #[test]
    fn title_edits() {
        let stub = "  \"mark\": \"bar\"";
        assert_eq!(set_title(stub, "Hi", "vegalite"), "  \"mark\": \"bar\",\n  \"title\": \"Hi\"");
        assert_eq!(requested_title("Change the chart title to Fuel by origin."), Some("Fuel by origin".into()));
        assert_eq!(set_title("    plt.title(\"a\")", "b", "matplotlib"), "    plt.title(\"b\")");
    }
}
