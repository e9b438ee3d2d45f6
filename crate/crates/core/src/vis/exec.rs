//! Candidate execution.
//!
//! Subprocess grammars run as a child process in a fresh working directory
//! with a cleared environment, an address-space limit and a wall-clock
//! timeout. Declarative grammars are validated against their schema and
//! never start a process.

use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::sandbox::DirSnapshot;
use super::scaffold::{ExecutionMode, Scaffold, DATA_PATH_PLACEHOLDER};
use super::{Artifact, CandidateProgram, CandidateStatus};

const OUTPUT_CAP: usize = 64 * 1024;
const DETAIL_CAP: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecLimits {
    pub timeout: Duration,
    pub memory_mb: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(30), memory_mb: 512 }
    }
}

/// The dataset a candidate is executed against.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub fields: Vec<String>,
}

impl DatasetRef {
    pub fn new(path: impl Into<PathBuf>, fields: Vec<String>) -> Self {
        Self { path: path.into(), fields }
    }
}

#[derive(Debug)]
pub struct Executor {
    run_root: PathBuf,
    limits: ExecLimits,
    guard_dirs: Option<Vec<PathBuf>>,
    max_parallel: usize,
    spawned: AtomicUsize,
    seq: AtomicUsize,
}

impl Executor {
    /// Creates `run_root` if needed. Every execution gets its own
    /// subdirectory there.
    pub fn new(run_root: impl AsRef<Path>) -> std::io::Result<Self> {
        std::fs::create_dir_all(run_root.as_ref())?;
        let run_root = run_root.as_ref().canonicalize()?;
        Ok(Self {
            run_root,
            limits: ExecLimits::default(),
            guard_dirs: None,
            max_parallel: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            spawned: AtomicUsize::new(0),
            seq: AtomicUsize::new(0),
        })
    }

    pub fn with_limits(mut self, limits: ExecLimits) -> Self {
        self.limits = limits;
        self
    }

    /// Directories watched for writes during a subprocess run. Defaults to
    /// the dataset's directory.
    pub fn with_guard_dirs(mut self, dirs: Vec<PathBuf>) -> Self {
        self.guard_dirs = Some(dirs);
        self
    }

    pub fn with_max_parallel(mut self, n: usize) -> Self {
        self.max_parallel = n.max(1);
        self
    }

    pub fn limits(&self) -> ExecLimits {
        self.limits
    }

    pub fn run_root(&self) -> &Path {
        &self.run_root
    }

    /// Child processes started so far.
    pub fn processes_spawned(&self) -> usize {
        self.spawned.load(Ordering::SeqCst)
    }

    /// Runs one candidate. Never fails: every outcome is encoded in the
    /// returned candidate's status.
    pub fn execute(&self, scaffold: &Scaffold, candidate: CandidateProgram, dataset: &DatasetRef) -> CandidateProgram {
        self.execute_with_limits(scaffold, candidate, dataset, self.limits)
    }

    pub fn execute_with_limits(
        &self,
        scaffold: &Scaffold,
        mut candidate: CandidateProgram,
        dataset: &DatasetRef,
        limits: ExecLimits,
    ) -> CandidateProgram {
        if candidate.status != CandidateStatus::Unexecuted {
            return candidate;
        }
        let outcome = match self.make_workdir(&candidate) {
            Ok(workdir) => match scaffold.execution_mode {
                ExecutionMode::DeclarativeValidation => run_declarative(scaffold, &candidate, dataset, &workdir),
                ExecutionMode::Subprocess => self.run_subprocess(scaffold, &candidate, dataset, &workdir, limits),
            },
            Err(e) => Outcome::fail(CandidateStatus::RuntimeError, format!("cannot create working directory: {e}")),
        };
        candidate.status = outcome.status;
        candidate.error_detail = outcome.detail.map(|d| crate::text::truncate_chars(&d, DETAIL_CAP));
        candidate.artifact = outcome.artifact;
        candidate
    }

    /// Executes candidates with bounded parallelism, preserving order.
    pub fn execute_all(
        &self,
        scaffold: &Scaffold,
        candidates: Vec<CandidateProgram>,
        dataset: &DatasetRef,
    ) -> Vec<CandidateProgram> {
        let mut out = Vec::with_capacity(candidates.len());
        let mut pending = candidates.into_iter().peekable();
        while pending.peek().is_some() {
            let batch: Vec<_> = pending.by_ref().take(self.max_parallel).collect();
            if batch.len() == 1 || scaffold.execution_mode == ExecutionMode::DeclarativeValidation {
                out.extend(batch.into_iter().map(|c| self.execute(scaffold, c, dataset)));
                continue;
            }
            std::thread::scope(|s| {
                let handles: Vec<_> =
                    batch.into_iter().map(|c| s.spawn(move || self.execute(scaffold, c, dataset))).collect();
                out.extend(handles.into_iter().map(|h| h.join().expect("executor thread panicked")));
            });
        }
        out
    }

    fn make_workdir(&self, candidate: &CandidateProgram) -> std::io::Result<PathBuf> {
        let n = self.seq.fetch_add(1, Ordering::SeqCst);
        let dir = self.run_root.join(format!(
            "{}-g{}-c{}-{}-{n:05}",
            candidate.scaffold_ref,
            candidate.goal_index,
            candidate.candidate_index,
            std::process::id()
        ));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn run_subprocess(
        &self,
        scaffold: &Scaffold,
        candidate: &CandidateProgram,
        dataset: &DatasetRef,
        workdir: &Path,
        limits: ExecLimits,
    ) -> Outcome {
        let data_path = match dataset.path.canonicalize() {
            Ok(p) => p,
            Err(e) => {
                return Outcome::fail(CandidateStatus::RuntimeError, format!("dataset {}: {e}", dataset.path.display()))
            }
        };
        let ext = if scaffold.language_id == "python" { "py" } else { "src" };
        let program = workdir.join(format!("program.{ext}"));
        let output = workdir.join("chart.png");
        if let Err(e) = std::fs::write(&program, &candidate.assembled_code) {
            return Outcome::fail(CandidateStatus::RuntimeError, format!("cannot write program: {e}"));
        }
        let Some((exe, args)) = scaffold.interpreter.split_first() else {
            return Outcome::fail(CandidateStatus::RuntimeError, "grammar has no interpreter".into());
        };
        let guard_dirs = self
            .guard_dirs
            .clone()
            .unwrap_or_else(|| data_path.parent().map(|p| vec![p.to_path_buf()]).unwrap_or_default());
        let exclude = vec![self.run_root.clone()];
        let before = DirSnapshot::capture(&guard_dirs, &exclude);

        let mpl_dir = self.run_root.join(".mplconfig");
        let _ = std::fs::create_dir_all(&mpl_dir);
        let mut cmd = Command::new(exe);
        cmd.args(args)
            .arg(&program)
            .arg(&data_path)
            .arg(&output)
            .current_dir(workdir)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/local/bin:/usr/bin:/bin".into()))
            .env("HOME", workdir)
            .env("TMPDIR", workdir)
            .env("MPLCONFIGDIR", &mpl_dir)
            .env("MPLBACKEND", "Agg")
            .env("OPENBLAS_NUM_THREADS", "1")
            .env("OMP_NUM_THREADS", "1")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        let memory_bytes = limits.memory_mb.saturating_mul(1024 * 1024) as libc::rlim_t;
        // SAFETY: only async-signal-safe calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                let as_limit = libc::rlimit { rlim_cur: memory_bytes, rlim_max: memory_bytes };
                if libc::setrlimit(libc::RLIMIT_AS, &as_limit) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                let no_core = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
                libc::setrlimit(libc::RLIMIT_CORE, &no_core);
                Ok(())
            });
        }
        let mut child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => return Outcome::fail(CandidateStatus::RuntimeError, format!("cannot start {exe}: {e}")),
        };
        self.spawned.fetch_add(1, Ordering::SeqCst);
        let stdout = drain(child.stdout.take());
        let stderr = drain(child.stderr.take());
        let waited = wait_with_timeout(&mut child, limits.timeout);
        // Reap stragglers that would keep the output pipes open.
        // SAFETY: plain syscall on the group created with process_group(0).
        unsafe {
            libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
        }
        let _stdout = join_drain(stdout);
        let stderr = join_drain(stderr);

        let after = DirSnapshot::capture(&guard_dirs, &exclude);
        let diff = before.diff(&after);
        if !diff.is_empty() {
            let paths: Vec<String> = diff.paths().map(|p| p.display().to_string()).collect();
            return Outcome::fail(
                CandidateStatus::RuntimeError,
                format!("sandbox violation: wrote outside working directory: {}", paths.join(", ")),
            );
        }

        let status = match waited {
            None => {
                return Outcome::fail(
                    CandidateStatus::Timeout,
                    format!("exceeded {:.1}s wall-clock limit", limits.timeout.as_secs_f64()),
                )
            }
            Some(Err(e)) => return Outcome::fail(CandidateStatus::RuntimeError, format!("wait failed: {e}")),
            Some(Ok(s)) => s,
        };
        if status.success() {
            return match std::fs::metadata(&output) {
                Ok(m) if m.len() > 0 => Outcome {
                    status: CandidateStatus::CompiledOk,
                    detail: None,
                    artifact: Some(Artifact::Raster { path: output }),
                },
                _ => Outcome::fail(CandidateStatus::RuntimeError, "program exited without writing an artifact".into()),
            };
        }
        let kind = if is_compile_error(&stderr, &scaffold.compile_error_markers) {
            CandidateStatus::CompileError
        } else {
            CandidateStatus::RuntimeError
        };
        let detail = match (status.code(), status.signal()) {
            (_, Some(sig)) => format!("killed by signal {sig}\n{stderr}"),
            (Some(code), _) if stderr.trim().is_empty() => format!("exit code {code}"),
            _ => stderr,
        };
        Outcome::fail(kind, detail)
    }
}

struct Outcome {
    status: CandidateStatus,
    detail: Option<String>,
    artifact: Option<Artifact>,
}

impl Outcome {
    fn fail(status: CandidateStatus, detail: String) -> Self {
        Self { status, detail: Some(detail), artifact: None }
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> Option<JoinHandle<String>> {
    let mut pipe = pipe?;
    Some(std::thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = OUTPUT_CAP.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        String::from_utf8_lossy(&kept).into_owned()
    }))
}

fn join_drain(handle: Option<JoinHandle<String>>) -> String {
    handle.and_then(|h| h.join().ok()).unwrap_or_default()
}

/// `None` when the deadline passed; the whole process group is killed.
fn wait_with_timeout(child: &mut Child, timeout: Duration) -> Option<std::io::Result<std::process::ExitStatus>> {
    let deadline = Instant::now() + timeout;
    let mut pause = Duration::from_millis(5);
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Some(Ok(status)),
            Ok(None) => {}
            Err(e) => return Some(Err(e)),
        }
        if Instant::now() >= deadline {
            kill_group(child);
            return None;
        }
        std::thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(50));
    }
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: plain syscall on the group we created with process_group(0).
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn is_compile_error(stderr: &str, markers: &[String]) -> bool {
    stderr.lines().any(|line| {
        let line = line.trim_start();
        markers.iter().any(|m| line.strip_prefix(m.as_str()).is_some_and(|rest| rest.starts_with(':')))
    })
}

fn run_declarative(scaffold: &Scaffold, candidate: &CandidateProgram, dataset: &DatasetRef, workdir: &Path) -> Outcome {
    let mut spec: Value = match serde_json::from_str(&candidate.assembled_code) {
        Ok(v) => v,
        Err(e) => return Outcome::fail(CandidateStatus::CompileError, format!("invalid JSON: {e}")),
    };
    let data_path = dataset.path.canonicalize().unwrap_or_else(|_| dataset.path.clone());
    substitute(&mut spec, DATA_PATH_PLACEHOLDER, &data_path.display().to_string());
    let Some(validator) = scaffold.validator() else {
        return Outcome::fail(CandidateStatus::CompileError, "grammar has no schema".into());
    };
    let errors: Vec<String> = validator
        .iter_errors(&spec)
        .take(5)
        .map(|e| {
            let at = e.instance_path.to_string();
            if at.is_empty() {
                e.to_string()
            } else {
                format!("{at}: {e}")
            }
        })
        .collect();
    if !errors.is_empty() {
        return Outcome::fail(
            CandidateStatus::CompileError,
            format!("schema validation failed: {}", errors.join("; ")),
        );
    }
    let mut known: Vec<String> = dataset.fields.clone();
    known.extend(derived_fields(&spec));
    let unknown: Vec<String> = referenced_fields(&spec).into_iter().filter(|f| !known.contains(f)).collect();
    if !unknown.is_empty() {
        return Outcome::fail(CandidateStatus::RuntimeError, format!("unknown field(s): {}", unknown.join(", ")));
    }
    let path = workdir.join("chart.json");
    let text = serde_json::to_string_pretty(&spec).expect("json value serializes");
    if let Err(e) = std::fs::write(&path, text) {
        return Outcome::fail(CandidateStatus::RuntimeError, format!("cannot write artifact: {e}"));
    }
    Outcome { status: CandidateStatus::CompiledOk, detail: None, artifact: Some(Artifact::Spec { path, spec }) }
}

fn substitute(value: &mut Value, placeholder: &str, replacement: &str) {
    match value {
        Value::String(s) if s == placeholder => *s = replacement.to_string(),
        Value::Array(items) => items.iter_mut().for_each(|v| substitute(v, placeholder, replacement)),
        Value::Object(map) => map.values_mut().for_each(|v| substitute(v, placeholder, replacement)),
        _ => {}
    }
}

/// Field names used by encoding channels.
pub fn referenced_fields(spec: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(encoding) = spec.get("encoding").and_then(Value::as_object) else {
        return out;
    };
    for channel in encoding.values() {
        let defs: Vec<&Value> = match channel {
            Value::Array(items) => items.iter().collect(),
            other => vec![other],
        };
        for def in defs {
            if let Some(f) = def.get("field").and_then(Value::as_str) {
                if !out.iter().any(|o| o == f) {
                    out.push(f.to_string());
                }
            }
        }
    }
    out
}

/// Names introduced by transforms (`as` outputs, fold defaults).
pub fn derived_fields(spec: &Value) -> Vec<String> {
    fn collect_as(v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(map) => {
                for (k, inner) in map {
                    if k == "as" {
                        match inner {
                            Value::String(s) => out.push(s.clone()),
                            Value::Array(items) => out.extend(items.iter().filter_map(Value::as_str).map(String::from)),
                            _ => {}
                        }
                    } else {
                        collect_as(inner, out);
                    }
                }
                if map.contains_key("fold") && !map.contains_key("as") {
                    out.extend(["key".to_string(), "value".to_string()]);
                }
            }
            Value::Array(items) => items.iter().for_each(|i| collect_as(i, out)),
            _ => {}
        }
    }
    let mut out = Vec::new();
    if let Some(t) = spec.get("transform") {
        collect_as(t, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vis::scaffold::{assemble, ScaffoldLibrary};
    use serde_json::json;

    fn candidate(scaffold: &Scaffold, stub: &str) -> CandidateProgram {
        CandidateProgram::new(0, 0, scaffold, stub.to_string(), assemble(scaffold, stub).unwrap())
    }

    fn dataset(dir: &Path) -> DatasetRef {
        let path = dir.join("d.csv");
        std::fs::write(&path, "a,b\nx,1\ny,2\n").unwrap();
        DatasetRef::new(path, vec!["a".into(), "b".into()])
    }

    #[test]
    fn valid_vegalite_compiles_without_processes() {
        let tmp = tempfile::tempdir().unwrap();
        let exec = Executor::new(tmp.path().join("runs")).unwrap();
        let s = ScaffoldLibrary::bundled().get_scaffold("vegalite").unwrap();
        let c = candidate(
            &s,
            r#"  "mark": "bar", "encoding": {"x": {"field": "a", "type": "nominal"}, "y": {"field": "b", "type": "quantitative"}}"#,
        );
        let out = exec.execute(&s, c, &dataset(tmp.path()));
        assert_eq!(out.status, CandidateStatus::CompiledOk, "{:?}", out.error_detail);
        let Some(Artifact::Spec { path, spec }) = &out.artifact else { panic!("expected spec artifact") };
        assert!(path.exists());
        assert!(spec["data"]["url"].as_str().unwrap().ends_with("d.csv"));
        assert_eq!(exec.processes_spawned(), 0);
    }

    #[test]
    fn vegalite_failures_map_to_statuses() {
        let tmp = tempfile::tempdir().unwrap();
        let exec = Executor::new(tmp.path().join("runs")).unwrap();
        let s = ScaffoldLibrary::bundled().get_scaffold("vegalite").unwrap();
        let d = dataset(tmp.path());
        let bad_json = exec.execute(&s, candidate(&s, r#"  "mark": bar"#), &d);
        assert_eq!(bad_json.status, CandidateStatus::CompileError);
        let bad_schema = exec.execute(&s, candidate(&s, r#"  "mark": "pie""#), &d);
        assert_eq!(bad_schema.status, CandidateStatus::CompileError);
        assert!(bad_schema.error_detail.unwrap().contains("schema"));
        let bad_field = exec.execute(
            &s,
            candidate(&s, r#"  "mark": "bar", "encoding": {"x": {"field": "zzz", "type": "nominal"}}"#),
            &d,
        );
        assert_eq!(bad_field.status, CandidateStatus::RuntimeError);
        assert!(bad_field.artifact.is_none());
    }

    #[test]
    fn transform_outputs_are_known_fields() {
        let spec = json!({
            "transform": [{"calculate": "datum.b * 2", "as": "b2"}, {"fold": ["a", "b"]}],
            "encoding": {"x": {"field": "b2"}, "y": {"field": "value"}, "tooltip": [{"field": "key"}]}
        });
        assert_eq!(derived_fields(&spec), vec!["b2", "key", "value"]);
        let mut refs = referenced_fields(&spec);
        refs.sort();
        assert_eq!(refs, vec!["b2", "key", "value"]);
    }

    #[test]
    fn compile_markers_need_a_colon() {
        let m = vec!["SyntaxError".to_string()];
        assert!(is_compile_error("  File \"p.py\", line 3\n    x=\nSyntaxError: invalid syntax", &m));
        assert!(!is_compile_error("ValueError: SyntaxError in data", &m));
    }

    #[test]
    fn executed_candidates_are_left_alone() {
        let tmp = tempfile::tempdir().unwrap();
        let exec = Executor::new(tmp.path().join("runs")).unwrap();
        let s = ScaffoldLibrary::bundled().get_scaffold("vegalite").unwrap();
        let mut c = candidate(&s, r#"  "mark": "bar""#);
        c.status = CandidateStatus::Timeout;
        assert_eq!(exec.execute(&s, c, &dataset(tmp.path())).status, CandidateStatus::Timeout);
    }
}
