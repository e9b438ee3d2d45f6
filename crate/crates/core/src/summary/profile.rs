//! Per-column profiling: atomic type, basic statistics and random samples.

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::table::{Cell, Column};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomicType {
    Integer,
    Float,
    Boolean,
    String,
    Date,
    Unknown,
}

impl AtomicType {
    pub fn as_str(self) -> &'static str {
        match self {
            AtomicType::Integer => "integer",
            AtomicType::Float => "float",
            AtomicType::Boolean => "boolean",
            AtomicType::String => "string",
            AtomicType::Date => "date",
            AtomicType::Unknown => "unknown",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, AtomicType::Integer | AtomicType::Float)
    }

    /// Whether a JSON sample value is a well-typed member of this type.
    pub fn admits(self, value: &Value) -> bool {
        match self {
            AtomicType::Integer => value.is_i64() || value.is_u64(),
            AtomicType::Float => value.is_number(),
            AtomicType::Boolean => value.is_boolean(),
            AtomicType::String => value.is_string(),
            AtomicType::Date => value.as_str().is_some_and(|s| parse_date(s).is_some()),
            AtomicType::Unknown => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub n_unique: usize,
    pub n_null: usize,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub name: String,
    pub atomic_type: AtomicType,
    pub stats: FieldStats,
    pub samples: Vec<Value>,
    pub semantic_type: Option<String>,
    pub description: Option<String>,
}

/// Minimum share of non-null values that must parse as ISO-8601 for a
/// string column to be typed `date`.
pub const DATE_PARSE_THRESHOLD: f64 = 0.9;

/// Parses ISO-8601 dates and date-times.
pub fn parse_date(text: &str) -> Option<NaiveDateTime> {
    let t = text.trim();
    if let Ok(d) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, fmt) {
            return Some(dt);
        }
    }
    DateTime::parse_from_rfc3339(t).ok().map(|dt| dt.naive_utc())
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Int,
    Float,
    Bool,
    Str,
}

/// Column-wise unification with widening integer → float → string. Booleans
/// only unify with booleans; string columns become `date` when at least
/// [`DATE_PARSE_THRESHOLD`] of their values parse as dates.
pub fn infer_atomic_type(cells: &[Cell]) -> AtomicType {
    let mut unified: Option<Kind> = None;
    for cell in cells {
        let kind = match cell {
            Cell::Null => continue,
            Cell::Int(_) => Kind::Int,
            Cell::Float(_) => Kind::Float,
            Cell::Bool(_) => Kind::Bool,
            Cell::Str(_) => Kind::Str,
        };
        unified = Some(match (unified, kind) {
            (None, k) => k,
            (Some(a), b) if a == b => a,
            (Some(Kind::Int), Kind::Float) | (Some(Kind::Float), Kind::Int) => Kind::Float,
            _ => Kind::Str,
        });
    }
    match unified {
        None => AtomicType::Unknown,
        Some(Kind::Int) => AtomicType::Integer,
        Some(Kind::Float) => AtomicType::Float,
        Some(Kind::Bool) => AtomicType::Boolean,
        Some(Kind::Str) => {
            let texts: Vec<String> = cells.iter().filter_map(Cell::as_text).collect();
            let parsed = texts.iter().filter(|t| parse_date(t).is_some()).count();
            if parsed as f64 >= DATE_PARSE_THRESHOLD * texts.len() as f64 {
                AtomicType::Date
            } else {
                AtomicType::String
            }
        }
    }
}

/// Typed view of a non-null cell under the column's unified type, plus a
/// key used for distinct-value counting.
fn typed_value(cell: &Cell, ty: AtomicType) -> Option<(String, Value)> {
    match (ty, cell) {
        (_, Cell::Null) => None,
        (AtomicType::Integer, Cell::Int(v)) => Some((v.to_string(), Value::from(*v))),
        (AtomicType::Float, Cell::Int(v)) => float_value(*v as f64),
        (AtomicType::Float, Cell::Float(v)) => float_value(*v),
        (AtomicType::Boolean, Cell::Bool(b)) => Some((b.to_string(), Value::Bool(*b))),
        (_, other) => other.as_text().map(|t| (format!("s:{t}"), Value::String(t))),
    }
}

fn float_value(v: f64) -> Option<(String, Value)> {
    let v = if v == 0.0 { 0.0 } else { v };
    serde_json::Number::from_f64(v).map(|n| (format!("f:{}", v.to_bits()), Value::Number(n)))
}

pub fn profile_column(column: &Column, sample_n: usize, rng_seed: u64) -> FieldProfile {
    let atomic_type = infer_atomic_type(&column.cells);
    let n_rows = column.cells.len();
    let n_null = column.cells.iter().filter(|c| c.is_null()).count();

    let mut distinct: IndexMap<String, Value> = IndexMap::new();
    for cell in &column.cells {
        if let Some((key, value)) = typed_value(cell, atomic_type) {
            distinct.entry(key).or_insert(value);
        }
    }

    let (min, max) = match atomic_type {
        AtomicType::Integer | AtomicType::Float => numeric_extent(distinct.values()),
        AtomicType::Date => date_extent(distinct.values()),
        _ => (None, None),
    };

    let eligible: Vec<&Value> = distinct.values().filter(|v| atomic_type.admits(v)).collect();
    let amount = sample_n.min(eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let samples =
        rand::seq::index::sample(&mut rng, eligible.len(), amount).into_iter().map(|i| eligible[i].clone()).collect();

    FieldProfile {
        name: column.name.clone(),
        atomic_type,
        stats: FieldStats { min, max, n_unique: distinct.len(), n_null, n_rows },
        samples,
        semantic_type: None,
        description: None,
    }
}

fn numeric_extent<'a>(values: impl Iterator<Item = &'a Value>) -> (Option<Value>, Option<Value>) {
    let mut lo: Option<&Value> = None;
    let mut hi: Option<&Value> = None;
    for v in values {
        let x = v.as_f64().unwrap_or(f64::NAN);
        if lo.is_none_or(|l| x < l.as_f64().unwrap_or(f64::NAN)) {
            lo = Some(v);
        }
        if hi.is_none_or(|h| x > h.as_f64().unwrap_or(f64::NAN)) {
            hi = Some(v);
        }
    }
    (lo.cloned(), hi.cloned())
}

fn date_extent<'a>(values: impl Iterator<Item = &'a Value>) -> (Option<Value>, Option<Value>) {
    let mut lo: Option<(NaiveDateTime, &Value)> = None;
    let mut hi: Option<(NaiveDateTime, &Value)> = None;
    for v in values {
        let Some(dt) = v.as_str().and_then(parse_date) else { continue };
        if lo.is_none_or(|(l, _)| dt < l) {
            lo = Some((dt, v));
        }
        if hi.is_none_or(|(h, _)| dt > h) {
            hi = Some((dt, v));
        }
    }
    (lo.map(|(_, v)| v.clone()), hi.map(|(_, v)| v.clone()))
}
