//! Sequential execution of a strategy: every action prompts its agent with
//! the agent profile, the goal, the task, the instruction and the resolved
//! important inputs. Progress is reported as an append-only event log.

mod trace;

pub use trace::{build_trace, trace_back, TraceEdge, TraceError, TraceGraph};

use crate::gateway::{
    bindings, CompletionRequest, Gateway, GatewayError, PromptTemplate, Stage,
    GENERATION_TEMPERATURE,
};
use crate::model::{
    validate_strategy, ActionSpec, AgentId, InputRef, InteractionType, ObjectId, Strategy, TaskId,
    TaskSpec, ValidationReport,
};
use crate::versions::VersionId;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

pub const DEFAULT_RETRIES: u32 = 2;

const ACTION_PROMPT: &str = r#"You are {agent_name}. {agent_profile}

Your team is working toward this goal: {goal}

Current step: {step_name}
{task_content}

Your action ({interaction_type}): {instruction}

{inputs}

Respond with the result of your action only."#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResolvedInput {
    pub input: InputRef,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionResult {
    pub task_id: TaskId,
    pub action_index: usize,
    pub agent_id: AgentId,
    pub interaction_type: InteractionType,
    pub prompt_rendered: String,
    pub output: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub resolved_inputs: Vec<ResolvedInput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "camelCase")]
pub enum RunStatus {
    Running,
    Completed,
    #[serde(rename_all = "camelCase")]
    Failed {
        task_id: TaskId,
        action_index: usize,
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum EventKind {
    #[serde(rename_all = "camelCase")]
    RunStarted {
        run_id: String,
        strategy_version: VersionId,
    },
    #[serde(rename_all = "camelCase")]
    TaskStarted {
        task_id: TaskId,
    },
    #[serde(rename_all = "camelCase")]
    ActionStarted {
        task_id: TaskId,
        action_index: usize,
    },
    #[serde(rename_all = "camelCase")]
    ActionRetry {
        task_id: TaskId,
        action_index: usize,
        attempt: u32,
        message: String,
    },
    ActionCompleted {
        result: ActionResult,
    },
    #[serde(rename_all = "camelCase")]
    ObjectMaterialized {
        object_id: ObjectId,
        value: String,
    },
    #[serde(rename_all = "camelCase")]
    TaskCompleted {
        task_id: TaskId,
    },
    RunFinished {
        status: RunStatus,
    },
}

/// One log entry. `seq` starts at 0 and increases by one per event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionRecord {
    pub run_id: String,
    pub strategy_version: VersionId,
    pub status: RunStatus,
    pub action_results: Vec<ActionResult>,
    /// Values of task outputs, set when the producing Finalize completes.
    pub object_values: BTreeMap<ObjectId, String>,
    pub events: Vec<RunEvent>,
}

impl ExecutionRecord {
    pub fn new(run_id: impl Into<String>, strategy_version: VersionId) -> Self {
        Self {
            run_id: run_id.into(),
            strategy_version,
            status: RunStatus::Running,
            action_results: Vec::new(),
            object_values: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn result(&self, task_id: &TaskId, index: usize) -> Option<&ActionResult> {
        self.action_results
            .iter()
            .find(|r| &r.task_id == task_id && r.action_index == index)
    }

    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Applies one event to the record's state (not to its log).
    fn apply(&mut self, kind: &EventKind) {
        match kind {
            EventKind::RunStarted {
                run_id,
                strategy_version,
            } => {
                self.run_id = run_id.clone();
                self.strategy_version = strategy_version.clone();
                self.status = RunStatus::Running;
            }
            EventKind::ActionCompleted { result } => self.action_results.push(result.clone()),
            EventKind::ObjectMaterialized { object_id, value } => {
                self.object_values.insert(object_id.clone(), value.clone());
            }
            EventKind::RunFinished { status } => self.status = status.clone(),
            EventKind::TaskStarted { .. }
            | EventKind::ActionStarted { .. }
            | EventKind::ActionRetry { .. }
            | EventKind::TaskCompleted { .. } => {}
        }
    }
}

/// The record's event log, in order.
pub fn replay_events(record: &ExecutionRecord) -> &[RunEvent] {
    &record.events
}

/// Rebuilds a record from its event log alone.
pub fn rebuild(events: &[RunEvent]) -> Result<ExecutionRecord, RuntimeError> {
    let mut record = ExecutionRecord::new("", VersionId(String::new()));
    for (i, event) in events.iter().enumerate() {
        if event.seq != i as u64 {
            return Err(RuntimeError::BrokenLog(format!(
                "event {i} carries sequence number {}",
                event.seq
            )));
        }
        if (i == 0) != matches!(event.kind, EventKind::RunStarted { .. }) {
            return Err(RuntimeError::BrokenLog(
                "a log starts with exactly one runStarted event".into(),
            ));
        }
        record.apply(&event.kind);
        record.events.push(event.clone());
    }
    if events.is_empty() {
        return Err(RuntimeError::BrokenLog("log is empty".into()));
    }
    Ok(record)
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("strategy is not valid: {}", .0.errors.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidStrategy(ValidationReport),
    #[error("task '{0}' has no team or no process yet")]
    NotExecutable(TaskId),
    #[error("{0} is not available yet")]
    UnmaterializedInput(String),
    #[error("event log is broken: {0}")]
    BrokenLog(String),
}

impl RuntimeError {
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::InvalidStrategy(_) => "validation-failed",
            RuntimeError::NotExecutable(_) => "not-executable",
            RuntimeError::UnmaterializedInput(_) => "unmaterialized-input",
            RuntimeError::BrokenLog(_) => "broken-log",
        }
    }
}

type Clock = dyn Fn() -> DateTime<Utc> + Send + Sync;

#[derive(Clone)]
pub struct ExecutionOptions {
    pub provider: String,
    pub seed: Option<u64>,
    pub retries: u32,
    /// Delay before the first retry; doubled for every further one.
    pub backoff: Duration,
    pub template: PromptTemplate,
    pub clock: Arc<Clock>,
}

impl std::fmt::Debug for ExecutionOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExecutionOptions")
            .field("provider", &self.provider)
            .field("seed", &self.seed)
            .field("retries", &self.retries)
            .field("backoff", &self.backoff)
            .finish()
    }
}

impl ExecutionOptions {
    pub fn new(provider: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            seed: None,
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(500),
            template: action_template(),
            clock: Arc::new(Utc::now),
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }
}

pub fn action_template() -> PromptTemplate {
    PromptTemplate::new(
        Stage::ActionExecution,
        ACTION_PROMPT,
        &[
            "agent_name",
            "agent_profile",
            "goal",
            "step_name",
            "task_content",
            "interaction_type",
            "instruction",
            "inputs",
        ],
        None,
    )
    .expect("built-in template")
}

/// Value of a key object at this point of the run: the initial value (or,
/// lacking one, its description) or a completed task's output.
fn object_value(
    strategy: &Strategy,
    values: &BTreeMap<ObjectId, String>,
    id: &ObjectId,
) -> Result<String, RuntimeError> {
    let object = strategy
        .object(id)
        .ok_or_else(|| RuntimeError::UnmaterializedInput(format!("key object '{id}'")))?;
    if object.is_initial() {
        return Ok(object
            .value
            .clone()
            .unwrap_or_else(|| object.description.clone()));
    }
    values
        .get(id)
        .cloned()
        .ok_or_else(|| RuntimeError::UnmaterializedInput(format!("key object '{id}'")))
}

/// Contents of the action's important inputs, in declaration order.
pub fn resolve_inputs(
    action: &ActionSpec,
    task: &TaskSpec,
    record: &ExecutionRecord,
    strategy: &Strategy,
) -> Result<Vec<ResolvedInput>, RuntimeError> {
    action
        .important_inputs
        .iter()
        .map(|input| {
            let content = match input {
                InputRef::KeyObject(id) => object_value(strategy, &record.object_values, id)?,
                InputRef::Action(i) => record
                    .result(&task.id, *i)
                    .map(|r| r.output.clone())
                    .ok_or_else(|| {
                        RuntimeError::UnmaterializedInput(format!(
                            "result of action {i} in task '{}'",
                            task.id
                        ))
                    })?,
            };
            Ok(ResolvedInput {
                input: input.clone(),
                content,
            })
        })
        .collect()
}

fn describe_inputs(
    strategy: &Strategy,
    task: &TaskSpec,
    action: &ActionSpec,
    resolved: &[ResolvedInput],
    values: &BTreeMap<ObjectId, String>,
) -> String {
    let mut sections = Vec::new();
    for r in resolved {
        let heading = match &r.input {
            InputRef::KeyObject(id) => {
                let name = strategy.object(id).map_or(id.as_str(), |o| o.name.as_str());
                format!("Key object \"{name}\":")
            }
            InputRef::Action(i) => {
                let source = &task.process[*i];
                let who = strategy
                    .agent_board
                    .get(&source.agent_id)
                    .map_or(source.agent_id.as_str(), |a| a.name.as_str());
                format!(
                    "Result of action {i} ({who}, {}):",
                    source.interaction_type.as_str()
                )
            }
        };
        sections.push(format!("{heading}\n{}", r.content));
    }
    // A Finalize without declared inputs still sees the task's inputs.
    if resolved.is_empty() && action.interaction_type == InteractionType::Finalize {
        for id in &task.input_object_ids {
            if let Ok(value) = object_value(strategy, values, id) {
                let name = strategy.object(id).map_or(id.as_str(), |o| o.name.as_str());
                sections.push(format!("Key object \"{name}\":\n{value}"));
            }
        }
    }
    if sections.is_empty() {
        "No prior information is provided for this action.".to_string()
    } else {
        format!("Important information:\n\n{}", sections.join("\n\n"))
    }
}

pub fn render_action_prompt(
    template: &PromptTemplate,
    strategy: &Strategy,
    task: &TaskSpec,
    action: &ActionSpec,
    resolved: &[ResolvedInput],
    values: &BTreeMap<ObjectId, String>,
) -> String {
    let (name, profile) = strategy
        .agent_board
        .get(&action.agent_id)
        .map(|a| (a.name.clone(), a.profile.clone()))
        .unwrap_or_else(|| (action.agent_id.to_string(), String::new()));
    template
        .render(&bindings([
            ("agent_name", name),
            ("agent_profile", profile),
            ("goal", strategy.goal.as_str().to_string()),
            ("step_name", task.step_name.clone()),
            ("task_content", task.task_content.clone()),
            (
                "interaction_type",
                action.interaction_type.as_str().to_string(),
            ),
            ("instruction", action.instruction.clone()),
            (
                "inputs",
                describe_inputs(strategy, task, action, resolved, values),
            ),
        ]))
        .expect("bindings cover the built-in placeholders")
}

struct Run<'a> {
    record: ExecutionRecord,
    clock: &'a Clock,
    sink: &'a mut dyn FnMut(&RunEvent),
}

impl Run<'_> {
    fn emit(&mut self, kind: EventKind) {
        let event = RunEvent {
            seq: self.record.events.len() as u64,
            at: (self.clock)(),
            kind,
        };
        self.record.apply(&event.kind);
        (self.sink)(&event);
        self.record.events.push(event);
    }

    fn fail(
        mut self,
        task_id: &TaskId,
        action_index: usize,
        code: &str,
        message: String,
    ) -> ExecutionRecord {
        self.emit(EventKind::RunFinished {
            status: RunStatus::Failed {
                task_id: task_id.clone(),
                action_index,
                code: code.to_string(),
                message,
            },
        });
        self.record
    }
}

/// Checks that `strategy` can be executed as is.
pub fn check_executable(strategy: &Strategy) -> Result<(), RuntimeError> {
    let report = validate_strategy(strategy);
    if !report.is_valid() {
        return Err(RuntimeError::InvalidStrategy(report));
    }
    if let Some(t) = strategy
        .tasks
        .iter()
        .find(|t| t.team.is_empty() || t.process.is_empty())
    {
        return Err(RuntimeError::NotExecutable(t.id.clone()));
    }
    Ok(())
}

/// Runs every action of every task in plan order, reporting each event to
/// `on_event` as it is logged. Provider failures are retried with
/// exponential backoff; when retries run out the record ends `Failed` with
/// every earlier result kept.
pub fn execute(
    strategy: &Strategy,
    version: &VersionId,
    run_id: &str,
    gateway: &Gateway,
    options: &ExecutionOptions,
    on_event: &mut dyn FnMut(&RunEvent),
) -> Result<ExecutionRecord, RuntimeError> {
    check_executable(strategy)?;
    let mut run = Run {
        record: ExecutionRecord::new(run_id, version.clone()),
        clock: options.clock.as_ref(),
        sink: on_event,
    };
    run.emit(EventKind::RunStarted {
        run_id: run_id.to_string(),
        strategy_version: version.clone(),
    });

    for task in &strategy.tasks {
        run.emit(EventKind::TaskStarted {
            task_id: task.id.clone(),
        });
        for (index, action) in task.process.iter().enumerate() {
            run.emit(EventKind::ActionStarted {
                task_id: task.id.clone(),
                action_index: index,
            });
            let resolved = match resolve_inputs(action, task, &run.record, strategy) {
                Ok(r) => r,
                Err(e) => return Ok(run.fail(&task.id, index, e.code(), e.to_string())),
            };
            let prompt = render_action_prompt(
                &options.template,
                strategy,
                task,
                action,
                &resolved,
                &run.record.object_values,
            );
            let started_at = (options.clock)();
            let mut attempt = 0;
            let output = loop {
                match call(gateway, options, &prompt) {
                    Ok(text) => break text,
                    Err(e) if attempt < options.retries && is_retryable(&e) => {
                        attempt += 1;
                        run.emit(EventKind::ActionRetry {
                            task_id: task.id.clone(),
                            action_index: index,
                            attempt,
                            message: e.to_string(),
                        });
                        let delay = options.backoff.saturating_mul(1 << (attempt - 1));
                        if !delay.is_zero() {
                            std::thread::sleep(delay);
                        }
                    }
                    Err(e) => return Ok(run.fail(&task.id, index, e.code(), e.to_string())),
                }
            };
            let result = ActionResult {
                task_id: task.id.clone(),
                action_index: index,
                agent_id: action.agent_id.clone(),
                interaction_type: action.interaction_type,
                prompt_rendered: prompt,
                output,
                started_at,
                finished_at: (options.clock)(),
                resolved_inputs: resolved,
            };
            let finalized = (task.finalize_index() == Some(index)).then(|| result.output.clone());
            run.emit(EventKind::ActionCompleted { result });
            if let Some(value) = finalized {
                run.emit(EventKind::ObjectMaterialized {
                    object_id: task.output_object_id.clone(),
                    value,
                });
            }
        }
        run.emit(EventKind::TaskCompleted {
            task_id: task.id.clone(),
        });
    }
    run.emit(EventKind::RunFinished {
        status: RunStatus::Completed,
    });
    Ok(run.record)
}

fn is_retryable(e: &GatewayError) -> bool {
    matches!(e, GatewayError::Provider(_))
}

fn call(
    gateway: &Gateway,
    options: &ExecutionOptions,
    prompt: &str,
) -> Result<String, GatewayError> {
    // The prompt is already rendered; pass it through a pass-all template.
    let passthrough = PromptTemplate::new(Stage::ActionExecution, "{prompt}", &["prompt"], None)
        .expect("static template");
    gateway.complete_text(&CompletionRequest {
        template: passthrough,
        bindings: bindings([("prompt", prompt.to_string())]),
        provider: options.provider.clone(),
        temperature: GENERATION_TEMPERATURE,
        seed: options.seed,
    })
}

#[cfg(test)]
mod tests;
