//! Columnar in-memory tables loaded from CSV or JSON records.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SummaryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    JsonRecords,
}

impl DataFormat {
    /// Guesses the format from a file extension (`.json` → records, else CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => DataFormat::JsonRecords,
            _ => DataFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl Cell {
    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    /// Text form used when a column unifies to `string`.
    pub fn as_text(&self) -> Option<String> {
        match self {
            Cell::Null => None,
            Cell::Int(v) => Some(v.to_string()),
            Cell::Float(v) => Some(v.to_string()),
            Cell::Bool(v) => Some(v.to_string()),
            Cell::Str(s) => Some(s.clone()),
        }
    }
}

/// Tokens read as missing values in CSV input.
pub const NULL_TOKENS: &[&str] = &["", "NA", "N/A", "NaN", "nan", "null", "NULL", "None"];

/// Parses one raw CSV field into the most specific cell kind.
pub fn parse_csv_cell(raw: &str) -> Cell {
    let t = raw.trim();
    if NULL_TOKENS.contains(&t) {
        return Cell::Null;
    }
    let unsigned = t.strip_prefix(['-', '+']).unwrap_or(t);
    // Leading zeros ("02134") are identifiers, not numbers.
    let leading_zero = unsigned.len() > 1 && unsigned.starts_with('0') && !unsigned.starts_with("0.");
    if !leading_zero {
        if let Ok(v) = t.parse::<i64>() {
            return Cell::Int(v);
        }
        if t.bytes().any(|b| b.is_ascii_digit()) && !t.contains(['x', 'X']) {
            if let Ok(v) = t.parse::<f64>() {
                if v.is_finite() {
                    return Cell::Float(v);
                }
            }
        }
    }
    match t.to_ascii_lowercase().as_str() {
        "true" => Cell::Bool(true),
        "false" => Cell::Bool(false),
        _ => Cell::Str(raw.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub source_path: String,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, |c| c.cells.len())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// First `n` rows as JSON objects (for table previews).
    pub fn preview(&self, n: usize) -> Vec<IndexMap<String, Value>> {
        (0..self.row_count().min(n))
            .map(|row| {
                self.columns
                    .iter()
                    .map(|c| {
                        let v = match &c.cells[row] {
                            Cell::Null => Value::Null,
                            Cell::Int(i) => Value::from(*i),
                            Cell::Float(f) => Value::from(*f),
                            Cell::Bool(b) => Value::Bool(*b),
                            Cell::Str(s) => Value::String(s.clone()),
                        };
                        (c.name.clone(), v)
                    })
                    .collect()
            })
            .collect()
    }

    fn from_columns(path: &Path, names: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, SummaryError> {
        if rows.is_empty() {
            return Err(SummaryError::EmptyDataset);
        }
        let mut columns: Vec<Column> =
            names.into_iter().map(|name| Column { name, cells: Vec::with_capacity(rows.len()) }).collect();
        for row in rows {
            for (col, cell) in columns.iter_mut().zip(row) {
                col.cells.push(cell);
            }
        }
        Ok(Table {
            name: path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string(),
            source_path: path.display().to_string(),
            columns,
        })
    }
}

pub fn ingest(path: impl AsRef<Path>, format: DataFormat) -> Result<Table, SummaryError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SummaryError::Io(format!("{}: {e}", path.display())))?;
    match format {
        DataFormat::Csv => ingest_csv(path, &bytes),
        DataFormat::JsonRecords => ingest_json(path, &bytes),
    }
}

fn ingest_csv(path: &Path, bytes: &[u8]) -> Result<Table, SummaryError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(bytes);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e)),
    };
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(SummaryError::HeaderMissing);
    }
    // A "header" made only of numbers is almost certainly a data row.
    if names.iter().all(|n| matches!(parse_csv_cell(n), Cell::Int(_) | Cell::Float(_))) {
        return Err(SummaryError::HeaderMissing);
    }
    check_unique(&names)?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if record.len() != names.len() {
            return Err(SummaryError::Parse {
                row: i + 1,
                column: record.len().min(names.len()),
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        rows.push(record.iter().map(parse_csv_cell).collect());
    }
    Table::from_columns(path, names, rows)
}

fn csv_error(e: csv::Error) -> SummaryError {
    let (row, column) = match e.kind() {
        csv::ErrorKind::Utf8 { pos, err } => (pos.as_ref().map_or(0, |p| p.record() as usize), err.field()),
        csv::ErrorKind::UnequalLengths { pos, len, .. } => {
            (pos.as_ref().map_or(0, |p| p.record() as usize), *len as usize)
        }
        _ => (0, 0),
    };
    SummaryError::Parse { row, column, message: e.to_string() }
}

fn ingest_json(path: &Path, bytes: &[u8]) -> Result<Table, SummaryError> {
    let records: Vec<IndexMap<String, Value>> = serde_json::from_slice(bytes).map_err(|e| SummaryError::Parse {
        row: e.line(),
        column: e.column(),
        message: format!("expected an array of flat objects: {e}"),
    })?;
    if records.is_empty() {
        return Err(SummaryError::EmptyDataset);
    }
    let mut names: IndexMap<String, ()> = IndexMap::new();
    for record in &records {
        for key in record.keys() {
            names.entry(key.clone()).or_insert(());
        }
    }
    let names: Vec<String> = names.into_keys().collect();
    if names.is_empty() {
        return Err(SummaryError::HeaderMissing);
    }
    let mut rows = Vec::with_capacity(records.len());
    for (row, record) in records.iter().enumerate() {
        let mut cells = Vec::with_capacity(names.len());
        for (column, name) in names.iter().enumerate() {
            let cell = match record.get(name) {
                None | Some(Value::Null) => Cell::Null,
                Some(Value::Bool(b)) => Cell::Bool(*b),
                Some(Value::Number(n)) => match n.as_i64() {
                    Some(i) => Cell::Int(i),
                    None => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
                },
                Some(Value::String(s)) => Cell::Str(s.clone()),
                Some(_) => {
                    return Err(SummaryError::Parse {
                        row,
                        column,
                        message: format!("field {name:?} holds a nested value"),
                    })
                }
            };
            cells.push(cell);
        }
        rows.push(cells);
    }
    Table::from_columns(path, names, rows)
}

fn check_unique(names: &[String]) -> Result<(), SummaryError> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(SummaryError::DuplicateColumn(n.clone()));
        }
    }
    Ok(())
}
