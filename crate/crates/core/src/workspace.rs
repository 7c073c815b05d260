//! Project files: one canonical JSON document (`*.agentcoord.json`) plus a
//! sidecar directory of run logs.

use crate::canonical::to_canonical_string;
use crate::explore::ExplorationSession;
use crate::model::{AgentBoard, AgentId, AgentProfile, Goal, InteractionType, Strategy};
use crate::runtime::{ExecutionRecord, RunStatus};
use crate::versions::{Payload, VersionId, VersionStore};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const PROJECT_EXTENSION: &str = ".agentcoord.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunEntry {
    pub run_id: String,
    pub strategy_version: VersionId,
    pub status: RunStatus,
    /// Log file, relative to the project file's directory.
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Project {
    pub format: u32,
    pub id: String,
    pub name: String,
    pub goal: Goal,
    pub agent_board: AgentBoard,
    pub current_strategy: VersionId,
    pub versions: VersionStore,
    #[serde(default)]
    pub exploration_sessions: Vec<ExplorationSession>,
    #[serde(default)]
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt project file at {path}: {message}")]
    CorruptFile { path: String, message: String },
    #[error("agent board does not match the import format: {}", .0.join("; "))]
    SchemaViolation(Vec<String>),
    #[error("unknown session '{0}'")]
    UnknownSession(String),
    #[error("unknown run '{0}'")]
    UnknownRun(String),
}

impl WorkspaceError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkspaceError::Io { .. } => "io-error",
            WorkspaceError::CorruptFile { .. } => "corrupt-file",
            WorkspaceError::SchemaViolation(_) => "schema-violation",
            WorkspaceError::UnknownSession(_) => "unknown-session",
            WorkspaceError::UnknownRun(_) => "unknown-run",
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        WorkspaceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn corrupt(path: impl Into<String>, message: impl Into<String>) -> Self {
        WorkspaceError::CorruptFile {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl Project {
    /// A project whose current strategy has no tasks yet.
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        goal: Goal,
        board: AgentBoard,
    ) -> Self {
        let mut versions = VersionStore::new();
        let current = versions.put_strategy(Strategy::new(goal.clone(), Vec::new(), board.clone()));
        Self {
            format: FORMAT_VERSION,
            id: id.into(),
            name: name.into(),
            goal,
            agent_board: board,
            current_strategy: current,
            versions,
            exploration_sessions: Vec::new(),
            runs: Vec::new(),
        }
    }

    pub fn strategy(&self) -> &Strategy {
        self.versions
            .strategy(&self.current_strategy)
            .expect("current strategy is in the store")
    }

    /// Stores `strategy` and makes it current; goal and board follow it.
    pub fn set_strategy(&mut self, strategy: Strategy) -> VersionId {
        self.goal = strategy.goal.clone();
        self.agent_board = strategy.agent_board.clone();
        let id = self.versions.put_strategy(strategy);
        self.current_strategy = id.clone();
        id
    }

    /// Replaces the board on the current strategy. Teams that name removed
    /// agents will fail validation until reassigned.
    pub fn set_board(&mut self, board: AgentBoard) -> VersionId {
        let mut s = self.strategy().clone();
        s.agent_board = board;
        self.set_strategy(s)
    }

    pub fn session(&self, id: &str) -> Result<&ExplorationSession, WorkspaceError> {
        self.exploration_sessions
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| WorkspaceError::UnknownSession(id.to_string()))
    }

    pub fn session_mut(&mut self, id: &str) -> Result<&mut ExplorationSession, WorkspaceError> {
        self.exploration_sessions
            .iter_mut()
            .find(|s| s.id == id)
            .ok_or_else(|| WorkspaceError::UnknownSession(id.to_string()))
    }

    pub fn next_session_id(&self) -> String {
        format!("session-{}", self.exploration_sessions.len() + 1)
    }

    pub fn next_run_id(&self) -> String {
        format!("run-{}", self.runs.len() + 1)
    }

    pub fn run(&self, id: &str) -> Result<&RunEntry, WorkspaceError> {
        self.runs
            .iter()
            .find(|r| r.run_id == id)
            .ok_or_else(|| WorkspaceError::UnknownRun(id.to_string()))
    }

    /// Every stored id must resolve: current strategy, session contexts and
    /// nodes, run strategy versions.
    pub fn check_references(&self) -> Result<(), WorkspaceError> {
        let mismatched = self.versions.mismatched();
        if let Some(id) = mismatched.first() {
            return Err(WorkspaceError::corrupt(
                format!("versions.{id}"),
                "content does not match its hash",
            ));
        }
        match self.versions.get(&self.current_strategy) {
            Some(Payload::Strategy { .. }) => {}
            Some(other) => {
                return Err(WorkspaceError::corrupt(
                    "currentStrategy",
                    format!("refers to a {} version", other.kind()),
                ))
            }
            None => {
                return Err(WorkspaceError::corrupt(
                    "currentStrategy",
                    format!("version {} is not in the store", self.current_strategy),
                ))
            }
        }
        let mut ids = HashSet::new();
        for (i, s) in self.exploration_sessions.iter().enumerate() {
            if !ids.insert(&s.id) {
                return Err(WorkspaceError::corrupt(
                    format!("explorationSessions[{i}].id"),
                    format!("duplicate session id '{}'", s.id),
                ));
            }
            s.check_forest(&self.versions).map_err(|e| {
                WorkspaceError::corrupt(format!("explorationSessions[{i}]"), e.to_string())
            })?;
        }
        let mut ids = HashSet::new();
        for (i, r) in self.runs.iter().enumerate() {
            if !ids.insert(&r.run_id) {
                return Err(WorkspaceError::corrupt(
                    format!("runs[{i}].runId"),
                    format!("duplicate run id '{}'", r.run_id),
                ));
            }
            if !self.versions.contains(&r.strategy_version) {
                return Err(WorkspaceError::corrupt(
                    format!("runs[{i}].strategyVersion"),
                    "version is not in the store",
                ));
            }
        }
        Ok(())
    }
}

/// Writes next to `path` and renames over it, so readers never observe a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), WorkspaceError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| WorkspaceError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        WorkspaceError::io(path, e)
    })
}

pub fn to_bytes(project: &Project) -> String {
    to_canonical_string(project).expect("projects always serialize")
}

pub fn save(project: &Project, path: &Path) -> Result<(), WorkspaceError> {
    write_atomic(path, to_bytes(project).as_bytes())
}

/// Parses a project document, failing closed on anything short of a
/// complete, internally consistent file.
pub fn from_bytes(bytes: &[u8]) -> Result<Project, WorkspaceError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| WorkspaceError::corrupt("$", format!("not UTF-8: {e}")))?;
    if !text.ends_with('\n') {
        return Err(WorkspaceError::corrupt(
            "$",
            "file is truncated (no final newline)",
        ));
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let project: Project = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        WorkspaceError::corrupt(
            if path == "." { "$".to_string() } else { path },
            e.inner().to_string(),
        )
    })?;
    if project.format != FORMAT_VERSION {
        return Err(WorkspaceError::corrupt(
            "format",
            format!("unsupported format {}", project.format),
        ));
    }
    project.check_references()?;
    Ok(project)
}

pub fn load(path: &Path) -> Result<Project, WorkspaceError> {
    let bytes = fs::read(path).map_err(|e| WorkspaceError::io(path, e))?;
    from_bytes(&bytes)
}

/// `<dir>/<stem>.runs/<run-id>.json` for a project at `<dir>/<stem>.agentcoord.json`.
pub fn run_log_path(project_path: &Path, run_id: &str) -> PathBuf {
    project_path.with_file_name(run_log_name(project_path, run_id))
}

fn run_log_name(project_path: &Path, run_id: &str) -> String {
    let file = project_path
        .file_name()
        .and_then(|f| f.to_str())
        .unwrap_or("project");
    let stem = file.strip_suffix(PROJECT_EXTENSION).unwrap_or(file);
    format!("{stem}.runs/{run_id}.json")
}

/// Writes the record's log and indexes it in the project (replacing an
/// existing entry with the same run id).
pub fn record_run(
    project: &mut Project,
    project_path: &Path,
    record: &ExecutionRecord,
) -> Result<(), WorkspaceError> {
    let text = to_canonical_string(record).expect("records always serialize");
    write_atomic(&run_log_path(project_path, &record.run_id), text.as_bytes())?;
    let entry = RunEntry {
        run_id: record.run_id.clone(),
        strategy_version: record.strategy_version.clone(),
        status: record.status.clone(),
        log: run_log_name(project_path, &record.run_id),
    };
    match project.runs.iter_mut().find(|r| r.run_id == entry.run_id) {
        Some(existing) => *existing = entry,
        None => project.runs.push(entry),
    }
    Ok(())
}

pub fn load_run(
    project: &Project,
    project_path: &Path,
    run_id: &str,
) -> Result<ExecutionRecord, WorkspaceError> {
    let entry = project.run(run_id)?;
    let path = project_path.with_file_name(&entry.log);
    let text = fs::read_to_string(&path).map_err(|e| WorkspaceError::io(&path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| WorkspaceError::corrupt(e.path().to_string(), e.inner().to_string()))
}

/// Parses the import format: an array of `{name, profile, avatar?}`.
/// Every offending entry is reported, not just the first.
pub fn parse_agent_board(text: &str) -> Result<AgentBoard, WorkspaceError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| WorkspaceError::SchemaViolation(vec![format!("not JSON: {e}")]))?;
    let Value::Array(entries) = doc else {
        return Err(WorkspaceError::SchemaViolation(vec![
            "expected an array of agents".into(),
        ]));
    };
    let mut problems = Vec::new();
    let mut agents = Vec::new();
    let mut names = HashSet::new();
    for (i, entry) in entries.iter().enumerate() {
        let Value::Object(fields) = entry else {
            problems.push(format!("[{i}]: expected an object"));
            continue;
        };
        let text_field = |key: &str| fields.get(key).and_then(Value::as_str).map(str::trim);
        for key in fields.keys() {
            if !matches!(key.as_str(), "name" | "profile" | "avatar") {
                problems.push(format!("[{i}].{key}: unknown field"));
            }
        }
        let name = text_field("name").filter(|s| !s.is_empty());
        let profile = text_field("profile").filter(|s| !s.is_empty());
        if name.is_none() {
            problems.push(format!("[{i}].name: required non-empty string"));
        }
        if profile.is_none() {
            problems.push(format!("[{i}].profile: required non-empty string"));
        }
        let avatar = match fields.get("avatar") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                problems.push(format!("[{i}].avatar: expected a string"));
                None
            }
        };
        if let (Some(name), Some(profile)) = (name, profile) {
            if !names.insert(name.to_lowercase()) {
                problems.push(format!("[{i}].name: duplicate agent name '{name}'"));
                continue;
            }
            agents.push(AgentProfile {
                id: AgentId::new(format!("agent-{}", agents.len() + 1)),
                name: name.to_string(),
                profile: profile.to_string(),
                avatar,
            });
        }
    }
    if agents.is_empty() && problems.is_empty() {
        problems.push("the board has no agents".into());
    }
    if problems.is_empty() {
        Ok(AgentBoard::new(agents))
    } else {
        Err(WorkspaceError::SchemaViolation(problems))
    }
}

pub fn import_agent_board(path: &Path) -> Result<AgentBoard, WorkspaceError> {
    let text = fs::read_to_string(path).map_err(|e| WorkspaceError::io(path, e))?;
    parse_agent_board(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "markdown" | "md" => Ok(ExportFormat::Markdown),
            other => Err(format!(
                "unknown export format '{other}' (json or markdown)"
            )),
        }
    }
}

/// Renders a run for sharing. Markdown follows plan order: one section per
/// task with its output value, then each action's output.
pub fn export_result(
    record: &ExecutionRecord,
    strategy: &Strategy,
    format: ExportFormat,
) -> String {
    match format {
        ExportFormat::Json => to_canonical_string(record).expect("records always serialize"),
        ExportFormat::Markdown => export_markdown(record, strategy),
    }
}

fn export_markdown(record: &ExecutionRecord, strategy: &Strategy) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", strategy.goal.as_str());
    let status = match &record.status {
        RunStatus::Running => "running".to_string(),
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Failed {
            task_id,
            action_index,
            message,
            ..
        } => format!("failed at {task_id} action {action_index}: {message}"),
    };
    let _ = writeln!(out, "Run `{}` — {status}.\n", record.run_id);
    for (t, task) in strategy.tasks.iter().enumerate() {
        let _ = writeln!(out, "## {}. {}\n", t + 1, task.step_name);
        let _ = writeln!(out, "{}\n", task.task_content);
        let output_name = strategy
            .object(&task.output_object_id)
            .map_or(task.output_object_id.as_str(), |o| o.name.as_str());
        let _ = writeln!(out, "### {output_name}\n");
        match record.object_values.get(&task.output_object_id) {
            Some(value) => {
                let _ = writeln!(out, "{}\n", value.trim_end());
            }
            None => out.push_str("_Not produced._\n\n"),
        }
        let results: Vec<_> = record
            .action_results
            .iter()
            .filter(|r| r.task_id == task.id)
            .collect();
        if results.is_empty() {
            continue;
        }
        out.push_str("### Actions\n\n");
        for r in results {
            let who = strategy
                .agent_board
                .get(&r.agent_id)
                .map_or(r.agent_id.as_str(), |a| a.name.as_str());
            let kind = match r.interaction_type {
                InteractionType::Propose => "Propose",
                InteractionType::Critique => "Critique",
                InteractionType::Improve => "Improve",
                InteractionType::Finalize => "Finalize",
            };
            let _ = writeln!(out, "#### {}. {kind} — {who}\n", r.action_index + 1);
            let _ = writeln!(out, "{}\n", r.output.trim_end());
        }
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn shipped_board_file_imports_as_the_novel_board() {
        let board = import_agent_board(&fixtures::novel_board_file()).unwrap();
        assert_eq!(board, fixtures::novel_board());
    }

    fn novel_project() -> Project {
        let mut p = Project::new(
            "p1",
            "Novel",
            Goal::new(fixtures::NOVEL_GOAL),
            fixtures::novel_board(),
        );
        p.set_strategy(fixtures::novel_strategy());
        p
    }

    #[test]
    fn round_trip_is_identical_and_byte_stable() {
        let p = novel_project();
        let bytes = to_bytes(&p);
        let back = from_bytes(bytes.as_bytes()).unwrap();
        assert_eq!(back, p);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn empty_project_round_trips() {
        let p = Project::new("p", "", Goal::new("g"), AgentBoard::default());
        assert_eq!(from_bytes(to_bytes(&p).as_bytes()).unwrap(), p);
    }

    #[test]
    fn truncation_fails_closed() {
        let bytes = to_bytes(&novel_project());
        for cut in [0, 1, bytes.len() / 2, bytes.len() - 2, bytes.len() - 1] {
            let err = from_bytes(&bytes.as_bytes()[..cut]).unwrap_err();
            assert_eq!(err.code(), "corrupt-file", "cut at {cut}");
        }
    }

    #[test]
    fn first_failing_path_is_reported() {
        let mut doc: Value = serde_json::from_str(&to_bytes(&novel_project())).unwrap();
        doc["agentBoard"][2]["name"] = Value::from(5);
        let text = to_canonical_string(&doc).unwrap();
        match from_bytes(text.as_bytes()).unwrap_err() {
            WorkspaceError::CorruptFile { path, .. } => assert_eq!(path, "agentBoard[2].name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampered_versions_are_detected() {
        let p = novel_project();
        let mut doc: Value = serde_json::from_str(&to_bytes(&p)).unwrap();
        let key = p.current_strategy.to_string();
        doc["versions"][&key]["strategy"]["goal"] = Value::from("Something else");
        let text = to_canonical_string(&doc).unwrap();
        match from_bytes(text.as_bytes()).unwrap_err() {
            WorkspaceError::CorruptFile { path, .. } => assert_eq!(path, format!("versions.{key}")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_is_atomic_and_idempotent() {
        let dir = std::env::temp_dir().join(format!("coordkit-ws-{}", std::process::id()));
        let path = dir.join(format!("novel{PROJECT_EXTENSION}"));
        let p = novel_project();
        save(&p, &path).unwrap();
        let first = fs::read(&path).unwrap();
        save(&load(&path).unwrap(), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        assert!(!dir.join(format!("novel{PROJECT_EXTENSION}.tmp")).exists());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn board_import_lists_every_problem() {
        let ok = parse_agent_board(
            r#"[{"name":"Poet","profile":"Writes verse."},{"name":"Critic","profile":"Reviews.","avatar":"c.png"}]"#,
        )
        .unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok.agents[1].id.as_str(), "agent-2");

        let err = parse_agent_board(
            r#"[{"name":"","profile":"x"},{"profile":"y"},{"name":"A","profile":"z","age":3},{"name":"B","profile":"w","avatar":1}]"#,
        )
        .unwrap_err();
        match err {
            WorkspaceError::SchemaViolation(list) => {
                assert_eq!(list.len(), 4, "{list:?}");
                assert!(list[0].starts_with("[0].name"));
                assert!(list[1].starts_with("[1].name"));
                assert!(list[2].starts_with("[2].age"));
                assert!(list[3].starts_with("[3].avatar"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_agent_board(r#"{"name":"x"}"#).is_err());
        assert!(
            parse_agent_board(r#"[{"name":"A","profile":"p"},{"name":"a","profile":"q"}]"#)
                .is_err()
        );
    }

    #[test]
    fn markdown_export_follows_plan_order() {
        use crate::gateway::{Gateway, MockProvider};
        use crate::runtime::{execute, ExecutionOptions};
        let s = fixtures::novel_strategy();
        let mut g = Gateway::new();
        g.register_provider("mock", std::sync::Arc::new(MockProvider::new()))
            .unwrap();
        let opts = ExecutionOptions::new("mock").with_backoff(std::time::Duration::ZERO);
        let record = execute(&s, &VersionId("v".into()), "run-1", &g, &opts, &mut |_| {}).unwrap();
        let md = export_result(&record, &s, ExportFormat::Markdown);
        let mut last = 0;
        for (i, t) in s.tasks.iter().enumerate() {
            let at = md.find(&format!("## {}. {}", i + 1, t.step_name)).unwrap();
            assert!(at >= last);
            last = at;
            assert!(md.contains(record.object_values[&t.output_object_id].as_str()));
        }
        let json = export_result(&record, &s, ExportFormat::Json);
        let back: ExecutionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
    }
}
