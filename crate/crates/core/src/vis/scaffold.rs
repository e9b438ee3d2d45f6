//! Scaffold library: per-grammar program templates with a single hole.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::VisError;
use crate::text::{strip_code_fences, trim_leading_prose};

pub const STUB_MARKER: &str = "<stub>";

/// Placeholder the declarative executor replaces with the dataset path.
pub const DATA_PATH_PLACEHOLDER: &str = "__DATA_PATH__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Subprocess,
    DeclarativeValidation,
}

/// One entry of the grammar registry file.
#[derive(Debug, Clone, Deserialize)]
pub struct RegistryEntry {
    pub grammar_id: String,
    pub language_id: String,
    pub execution_mode: ExecutionMode,
    pub scaffold: String,
    #[serde(default)]
    pub schema: Option<String>,
    pub empty_stub: String,
    #[serde(default)]
    pub stub_indent: Option<String>,
    #[serde(default)]
    pub instructions: String,
    #[serde(default)]
    pub line_comment: Option<String>,
    #[serde(default)]
    pub compile_error_markers: Option<Vec<String>>,
    #[serde(default)]
    pub interpreter: Option<Vec<String>>,
}

#[derive(Clone, Serialize)]
pub struct Scaffold {
    pub grammar_id: String,
    pub language_id: String,
    pub preamble: String,
    pub stub_marker: String,
    pub postamble: String,
    pub execution_mode: ExecutionMode,
    pub empty_stub: String,
    pub stub_indent: Option<String>,
    pub instructions: String,
    pub line_comment: Option<String>,
    pub compile_error_markers: Vec<String>,
    pub interpreter: Vec<String>,
    #[serde(skip)]
    pub schema: Option<Value>,
    #[serde(skip)]
    validator: Option<Arc<jsonschema::Validator>>,
}

impl fmt::Debug for Scaffold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scaffold")
            .field("grammar_id", &self.grammar_id)
            .field("language_id", &self.language_id)
            .field("execution_mode", &self.execution_mode)
            .finish_non_exhaustive()
    }
}

/// How candidate code is compared for consensus clustering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeStyle {
    pub line_comment: Option<String>,
    /// Keep line structure and leading indentation (Python).
    pub significant_indentation: bool,
}

impl Scaffold {
    pub fn template(&self) -> String {
        format!("{}{}{}", self.preamble, self.stub_marker, self.postamble)
    }

    pub fn validator(&self) -> Option<&jsonschema::Validator> {
        self.validator.as_deref()
    }

    pub fn code_style(&self) -> CodeStyle {
        CodeStyle { line_comment: self.line_comment.clone(), significant_indentation: self.language_id == "python" }
    }

    fn from_entry(entry: RegistryEntry, template: &str, schema: Option<Value>) -> Result<Self, VisError> {
        let invalid = |reason: String| VisError::InvalidScaffold { grammar_id: entry.grammar_id.clone(), reason };
        let mut parts = template.split(STUB_MARKER);
        let (Some(preamble), Some(postamble), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(invalid(format!("template must contain {STUB_MARKER} exactly once")));
        };
        if entry.execution_mode == ExecutionMode::DeclarativeValidation && schema.is_none() {
            return Err(invalid("declarative grammar needs a schema".into()));
        }
        let validator = match &schema {
            Some(s) => Some(Arc::new(jsonschema::validator_for(s).map_err(|e| invalid(format!("bad schema: {e}")))?)),
            None => None,
        };
        let python = entry.language_id == "python";
        let default_markers: Vec<String> = if python {
            ["SyntaxError", "IndentationError", "TabError"].map(String::from).to_vec()
        } else {
            Vec::new()
        };
        let interpreter = match (entry.interpreter, entry.execution_mode) {
            (Some(cmd), _) => cmd,
            (None, ExecutionMode::Subprocess) if python => vec!["python3".into(), "-I".into()],
            (None, ExecutionMode::Subprocess) => return Err(invalid("subprocess grammar needs an interpreter".into())),
            (None, ExecutionMode::DeclarativeValidation) => Vec::new(),
        };
        Ok(Scaffold {
            preamble: preamble.to_string(),
            stub_marker: STUB_MARKER.to_string(),
            postamble: postamble.to_string(),
            execution_mode: entry.execution_mode,
            empty_stub: entry.empty_stub,
            stub_indent: entry.stub_indent,
            instructions: entry.instructions,
            line_comment: entry.line_comment.or_else(|| python.then(|| "#".to_string())),
            compile_error_markers: entry.compile_error_markers.unwrap_or(default_markers),
            interpreter,
            schema,
            validator,
            grammar_id: entry.grammar_id,
            language_id: entry.language_id,
        })
    }
}

/// Immutable set of registered scaffolds keyed by grammar id.
#[derive(Debug, Clone)]
pub struct ScaffoldLibrary {
    scaffolds: BTreeMap<String, Arc<Scaffold>>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("registry.json", include_str!("../../resources/scaffolds/registry.json")),
    ("vegalite.json.tmpl", include_str!("../../resources/scaffolds/vegalite.json.tmpl")),
    ("vegalite.schema.json", include_str!("../../resources/scaffolds/vegalite.schema.json")),
    ("matplotlib.py.tmpl", include_str!("../../resources/scaffolds/matplotlib.py.tmpl")),
    ("seaborn.py.tmpl", include_str!("../../resources/scaffolds/seaborn.py.tmpl")),
];

impl ScaffoldLibrary {
    /// The scaffolds shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_files(|name| {
            BUNDLED
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, body)| body.to_string())
                .ok_or_else(|| format!("no bundled file {name}"))
        })
        .expect("bundled scaffolds are valid")
    }

    /// Loads `registry.json` and the files it references from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, VisError> {
        let dir = dir.as_ref();
        Self::from_files(|name| std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}")))
    }

    fn from_files(read: impl Fn(&str) -> Result<String, String>) -> Result<Self, VisError> {
        let registry_err = |reason: String| VisError::InvalidScaffold { grammar_id: "registry".into(), reason };
        let registry: Vec<RegistryEntry> = serde_json::from_str(&read("registry.json").map_err(registry_err)?)
            .map_err(|e| registry_err(e.to_string()))?;
        let mut scaffolds = BTreeMap::new();
        for entry in registry {
            let template = read(&entry.scaffold).map_err(registry_err)?;
            let schema = match &entry.schema {
                Some(file) => {
                    let text = read(file).map_err(registry_err)?;
                    Some(serde_json::from_str(&text).map_err(|e| registry_err(format!("{file}: {e}")))?)
                }
                None => None,
            };
            let id = entry.grammar_id.clone();
            if scaffolds.contains_key(&id) {
                return Err(registry_err(format!("grammar {id} registered twice")));
            }
            scaffolds.insert(id, Arc::new(Scaffold::from_entry(entry, &template, schema)?));
        }
        Ok(Self { scaffolds })
    }

    pub fn get_scaffold(&self, grammar_id: &str) -> Result<Arc<Scaffold>, VisError> {
        self.scaffolds.get(grammar_id).cloned().ok_or_else(|| VisError::UnknownGrammar(grammar_id.to_string()))
    }

    pub fn grammar_ids(&self) -> Vec<&str> {
        self.scaffolds.keys().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Scaffold>> {
        self.scaffolds.values()
    }
}

impl Default for ScaffoldLibrary {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Inserts `stub` in place of the marker. The stub is used verbatim.
pub fn assemble(scaffold: &Scaffold, stub: &str) -> Result<String, VisError> {
    if stub.trim().is_empty() {
        return Err(VisError::EmptyStub);
    }
    Ok(format!("{}{}{}", scaffold.preamble, stub, scaffold.postamble))
}

/// Cleans a raw model reply into a stub for `scaffold`.
///
/// Strips markdown fences and lead-in prose, drops any echoed scaffold
/// lines around the hole, unwraps a complete JSON document for declarative
/// grammars and re-indents to the scaffold's stub indentation.
pub fn postprocess_stub(scaffold: &Scaffold, raw: &str) -> String {
    let text = trim_leading_prose(&strip_code_fences(raw));
    let text = drop_echoes(scaffold, &text);
    let text = match scaffold.execution_mode {
        ExecutionMode::DeclarativeValidation => unwrap_declarative(&text),
        ExecutionMode::Subprocess => text,
    };
    let text = match &scaffold.stub_indent {
        Some(indent) => reindent(&text, indent),
        None => text,
    };
    let text = text.trim_end().to_string();
    if text.trim().is_empty() {
        String::new()
    } else {
        text
    }
}

fn last_code_line(text: &str) -> Option<&str> {
    text.lines().map(str::trim).rfind(|l| !l.is_empty())
}

fn first_code_line(text: &str) -> Option<&str> {
    text.lines().map(str::trim).find(|l| !l.is_empty())
}

fn drop_echoes(scaffold: &Scaffold, text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().collect();
    if let Some(head) = last_code_line(&scaffold.preamble) {
        if let Some(pos) = lines.iter().position(|l| l.trim() == head) {
            lines.drain(..=pos);
        }
    }
    if let Some(tail) = first_code_line(&scaffold.postamble) {
        if let Some(pos) = lines.iter().position(|l| l.trim() == tail) {
            lines.truncate(pos);
        }
    }
    lines.join("\n")
}

fn unwrap_declarative(text: &str) -> String {
    let trimmed = text.trim();
    let trimmed = trimmed.strip_suffix(',').unwrap_or(trimmed).trim_end();
    if !trimmed.starts_with('{') {
        return trimmed.to_string();
    }
    let Ok(Value::Object(mut obj)) = serde_json::from_str::<Value>(trimmed) else {
        return trimmed.to_string();
    };
    obj.remove("$schema");
    obj.remove("data");
    object_members(&obj)
}

fn object_members(obj: &Map<String, Value>) -> String {
    obj.iter().map(|(k, v)| format!("  {}: {}", Value::String(k.clone()), v)).collect::<Vec<_>>().join(",\n")
}

fn reindent(text: &str, indent: &str) -> String {
    let common =
        text.lines().filter(|l| !l.trim().is_empty()).map(|l| l.len() - l.trim_start().len()).min().unwrap_or(0);
    text.lines()
        .map(|l| if l.trim().is_empty() { String::new() } else { format!("{indent}{}", &l[common..]) })
        .collect::<Vec<_>>()
        .join("\n")
}
