//! Dataset summarization.
//!
//! A summary is built in two stages: a rule-based base summary (atomic
//! types, min/max, distinct counts and a few random samples per column) and
//! an optional enrichment that adds a dataset description plus per-field
//! descriptions and semantic types, either from a model or from the user.
//! Statistics are fixed once the base summary exists; later stages only
//! touch descriptive text.

mod profile;
mod table;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use profile::{
    infer_atomic_type, parse_date, profile_column, AtomicType, FieldProfile, FieldStats, DATE_PARSE_THRESHOLD,
};
pub use table::{ingest, parse_csv_cell, Cell, Column, DataFormat, Table, NULL_TOKENS};

use crate::llm::{generate, GenerationConfig, Message, PromptRequest, ProviderError, TextProvider};
use crate::text::{extract_json, truncate_chars};

/// Samples kept per column unless configured otherwise.
pub const DEFAULT_SAMPLE_N: usize = 5;
/// Longest sample string rendered into prompts.
pub const MAX_SAMPLE_CHARS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dataset has no usable header row")]
    HeaderMissing,
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("summary is already enriched")]
    AlreadyEnriched,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrichmentStatus {
    Base,
    LlmEnriched,
    UserRefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub source_path: String,
    pub description: Option<String>,
    pub fields: Vec<FieldProfile>,
    pub row_count: usize,
    pub enrichment_status: EnrichmentStatus,
}

impl DatasetSummary {
    pub fn field(&self, name: &str) -> Option<&FieldProfile> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_names(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }
}

/// How much of the summary is shown to downstream prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryCondition {
    NoEnrich,
    Enrich,
    Schema,
    NoSummary,
}

impl SummaryCondition {
    pub const ALL: [SummaryCondition; 4] =
        [SummaryCondition::NoEnrich, SummaryCondition::Enrich, SummaryCondition::Schema, SummaryCondition::NoSummary];

    pub fn as_str(self) -> &'static str {
        match self {
            SummaryCondition::NoEnrich => "no_enrich",
            SummaryCondition::Enrich => "enrich",
            SummaryCondition::Schema => "schema",
            SummaryCondition::NoSummary => "no_summary",
        }
    }
}

impl std::str::FromStr for SummaryCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition {s:?} (expected no_enrich, enrich, schema or no_summary)"))
    }
}

pub fn build_base_summary(table: &Table, sample_n: usize, rng_seed: u64) -> Result<DatasetSummary, SummaryError> {
    if table.columns.is_empty() || table.row_count() == 0 {
        return Err(SummaryError::EmptyDataset);
    }
    let fields = table
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| profile_column(c, sample_n.max(1), rng_seed.wrapping_add(i as u64)))
        .collect();
    Ok(DatasetSummary {
        name: table.name.clone(),
        source_path: table.source_path.clone(),
        description: None,
        fields,
        row_count: table.row_count(),
        enrichment_status: EnrichmentStatus::Base,
    })
}

/// Result of an enrichment attempt. On a malformed reply the input summary
/// comes back unchanged and `warning` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enrichment {
    pub summary: DatasetSummary,
    pub warning: Option<String>,
}

const ENRICH_SYSTEM: &str = "You are an experienced data analyst that can annotate datasets. \
Your instructions are as follows: i) ALWAYS generate the name of the dataset and the dataset_description \
ii) ALWAYS generate a field description. iii) ALWAYS generate a semantic_type (a single word) for each field \
given its values e.g. company, city, number, supplier, location, gender, longitude, latitude, url, ip address, zip code, email, etc.";

pub fn enrichment_prompt(summary: &DatasetSummary) -> PromptRequest {
    let base = render_summary(summary, SummaryCondition::NoEnrich);
    let body = format!(
        "Annotate the dataset summarized below.\n\n{base}\n\n\
Return a single JSON object of the form\n\
{{\"dataset_description\": \"...\", \"fields\": [{{\"name\": \"<field>\", \"description\": \"...\", \"semantic_type\": \"...\"}}]}}\n\
with one entry per field, using the exact field names above."
    );
    PromptRequest::completion(ENRICH_SYSTEM, vec![Message::user(body)])
        .with_meta("task", "enrich_summary")
        .with_meta("dataset", summary.name.clone())
}

/// Adds model-predicted descriptions and semantic types in one provider
/// call.
pub fn enrich_summary(
    summary: &DatasetSummary,
    provider: &dyn TextProvider,
    config: &GenerationConfig,
) -> Result<Enrichment, SummaryError> {
    if summary.enrichment_status == EnrichmentStatus::LlmEnriched {
        return Err(SummaryError::AlreadyEnriched);
    }
    let config = GenerationConfig { n_candidates: 1, ..config.clone() };
    let reply = generate(provider, &enrichment_prompt(summary), &config)?;
    match parse_enrichment(reply.first(), summary) {
        Ok(enriched) => Ok(Enrichment { summary: enriched, warning: None }),
        Err(reason) => {
            tracing::warn!(dataset = %summary.name, %reason, "summary enrichment reply could not be used");
            Ok(Enrichment { summary: summary.clone(), warning: Some(reason) })
        }
    }
}

fn parse_enrichment(reply: &str, summary: &DatasetSummary) -> Result<DatasetSummary, String> {
    let doc = extract_json(reply).ok_or_else(|| "enrichment reply contains no JSON".to_string())?;
    let obj = doc.as_object().ok_or_else(|| "enrichment reply is not a JSON object".to_string())?;
    let description =
        obj.get("dataset_description").or_else(|| obj.get("description")).and_then(Value::as_str).map(str::to_string);

    let mut per_field: IndexMap<String, (Option<String>, Option<String>)> = IndexMap::new();
    let text = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
    match obj.get("fields") {
        Some(Value::Array(items)) => {
            for item in items {
                let name = item
                    .get("name")
                    .or_else(|| item.get("column"))
                    .and_then(Value::as_str)
                    .ok_or_else(|| "field entry without a name".to_string())?;
                per_field.insert(name.to_string(), (text(item, "description"), text(item, "semantic_type")));
            }
        }
        Some(Value::Object(map)) => {
            for (name, item) in map {
                per_field.insert(name.clone(), (text(item, "description"), text(item, "semantic_type")));
            }
        }
        _ => return Err("enrichment reply has no fields".into()),
    }
    if description.is_none() && per_field.values().all(|(d, s)| d.is_none() && s.is_none()) {
        return Err("enrichment reply carries no annotations".into());
    }

    let mut out = summary.clone();
    if description.is_some() {
        out.description = description;
    }
    for field in &mut out.fields {
        if let Some((desc, sem)) = per_field.get(&field.name) {
            if desc.is_some() {
                field.description = desc.clone();
            }
            if sem.is_some() {
                field.semantic_type = sem.clone();
            }
        }
    }
    out.enrichment_status = EnrichmentStatus::LlmEnriched;
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldEdit {
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub semantic_type: Option<String>,
}

/// User overrides for descriptive parts of a summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryEdits {
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub fields: IndexMap<String, FieldEdit>,
}

pub fn apply_user_refinement(summary: &DatasetSummary, edits: &SummaryEdits) -> Result<DatasetSummary, SummaryError> {
    if let Some(unknown) = edits.fields.keys().find(|name| summary.field(name).is_none()) {
        return Err(SummaryError::UnknownField(unknown.clone()));
    }
    let mut out = summary.clone();
    if let Some(d) = &edits.description {
        out.description = Some(d.clone());
    }
    for field in &mut out.fields {
        if let Some(edit) = edits.fields.get(&field.name) {
            if let Some(d) = &edit.description {
                field.description = Some(d.clone());
            }
            if let Some(s) = &edit.semantic_type {
                field.semantic_type = Some(s.clone());
            }
        }
    }
    out.enrichment_status = EnrichmentStatus::UserRefined;
    Ok(out)
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Text embedded into downstream prompts.
///
/// The layout is one `key: value` line per property so prompts (and with
/// them cassette fingerprints) are stable. Row counts are deliberately left
/// out: the rendered length depends only on the schema and the samples.
pub fn render_summary(summary: &DatasetSummary, condition: SummaryCondition) -> String {
    let mut lines: Vec<String> = Vec::new();
    match condition {
        SummaryCondition::NoSummary => return String::new(),
        SummaryCondition::Schema => {
            for f in &summary.fields {
                lines.push(format!("field: {}", f.name));
            }
        }
        SummaryCondition::NoEnrich | SummaryCondition::Enrich => {
            let enriched = condition == SummaryCondition::Enrich;
            lines.push(format!("dataset: {}", summary.name));
            if let (true, Some(d)) = (enriched, &summary.description) {
                lines.push(format!("description: {}", one_line(d)));
            }
            for f in &summary.fields {
                lines.push(format!("field: {}", f.name));
                lines.push(format!("  type: {}", f.atomic_type.as_str()));
                if enriched {
                    if let Some(s) = &f.semantic_type {
                        lines.push(format!("  semantic_type: {}", one_line(s)));
                    }
                    if let Some(d) = &f.description {
                        lines.push(format!("  description: {}", one_line(d)));
                    }
                }
                if let Some(min) = &f.stats.min {
                    lines.push(format!("  min: {}", scalar_text(min)));
                }
                if let Some(max) = &f.stats.max {
                    lines.push(format!("  max: {}", scalar_text(max)));
                }
                lines.push(format!("  n_unique: {}", f.stats.n_unique));
                let samples: Vec<Value> = f
                    .samples
                    .iter()
                    .map(|s| match s {
                        Value::String(t) => json!(truncate_chars(t, MAX_SAMPLE_CHARS)),
                        other => other.clone(),
                    })
                    .collect();
                lines.push(format!("  samples: {}", Value::Array(samples)));
            }
        }
    }
    lines.join("\n")
}
