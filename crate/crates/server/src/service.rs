//! Project-level operations shared by the CLI and the HTTP API. Each takes
//! the project by `&mut` and leaves it untouched on error; persisting the
//! result is the caller's job.

use crate::error::ApiError;
use chrono::{DateTime, Utc};
use coordkit_core::explore::{
    open_session, ExplorationSession, NodeId, RankedAgent, SessionKind, SessionSeed, SpawnRequest,
};
use coordkit_core::gateway::Gateway;
use coordkit_core::genesis::{AspectSet, GenerationOptions, Generator, ScoreMatrix};
use coordkit_core::model::{
    validate_strategy, ActionSpec, AgentBoard, AgentId, Goal, NodeRef, Strategy, TaskId,
    ValidationReport,
};
use coordkit_core::runtime::{
    build_trace, check_executable, execute, trace_back, ExecutionOptions, ExecutionRecord,
    RunEvent, TraceGraph,
};
use coordkit_core::versions::{Payload, VersionId};
use coordkit_core::workspace::{self, Project};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

#[derive(Clone)]
pub struct Service {
    gateway: Arc<Gateway>,
    provider: String,
    seed: Option<u64>,
    backoff: Duration,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyState {
    pub version: VersionId,
    pub strategy: Strategy,
    pub validation: ValidationReport,
}

impl StrategyState {
    pub fn of(project: &Project) -> Self {
        let strategy = project.strategy().clone();
        Self {
            version: project.current_strategy.clone(),
            validation: validate_strategy(&strategy),
            strategy,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AssignOutcome {
    pub team: Vec<AgentId>,
    /// Whether the task's process had to be regenerated for the new team.
    pub process_regenerated: bool,
    pub version: VersionId,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskPatch {
    pub step_name: Option<String>,
    pub task_content: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AspectEdit {
    /// Ask the model for aspects first (replaces model-derived ones).
    #[serde(default)]
    pub derive: bool,
    #[serde(default)]
    pub add: Vec<String>,
    /// When given, exactly these aspects end up selected.
    pub select: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceOutcome {
    pub node: NodeRef,
    pub predecessors: Vec<NodeRef>,
    pub graph: TraceGraph,
}

fn task_id_of(strategy: &Strategy, key: &str) -> Result<TaskId, ApiError> {
    let key = key.trim();
    strategy
        .tasks
        .iter()
        .find(|t| t.id.as_str() == key)
        .or_else(|| {
            let mut hits = strategy
                .tasks
                .iter()
                .filter(|t| t.step_name.eq_ignore_ascii_case(key));
            match (hits.next(), hits.next()) {
                (Some(t), None) => Some(t),
                _ => None,
            }
        })
        .map(|t| t.id.clone())
        .ok_or_else(|| ApiError::new("unknown-task", format!("no task '{key}'")))
}

impl Service {
    pub fn new(gateway: Arc<Gateway>, provider: impl Into<String>, seed: Option<u64>) -> Self {
        Self {
            gateway,
            provider: provider.into(),
            seed,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    /// The same service with generation routed to `provider` for one
    /// operation, e.g. a faster model while exploring.
    pub fn routed(&self, provider: Option<&str>) -> Result<Service, ApiError> {
        let Some(id) = provider else {
            return Ok(self.clone());
        };
        if !self.gateway.has_provider(id) {
            return Err(ApiError::new(
                "provider-unavailable",
                format!("provider '{id}' is not configured"),
            )
            .at("provider"));
        }
        Ok(Service {
            provider: id.to_string(),
            ..self.clone()
        })
    }

    pub fn generator(&self) -> Generator {
        let mut options = GenerationOptions::new(self.provider.clone());
        options.seed = self.seed;
        Generator::new(self.gateway.clone(), options)
    }

    pub fn execution_options(&self) -> ExecutionOptions {
        ExecutionOptions::new(self.provider.clone())
            .with_seed(self.seed)
            .with_backoff(self.backoff)
    }

    /// Resolves a task by id or unique step name.
    pub fn task_id(&self, project: &Project, key: &str) -> Result<TaskId, ApiError> {
        task_id_of(project.strategy(), key)
    }

    pub fn import_board(&self, project: &mut Project, text: &str) -> Result<AgentBoard, ApiError> {
        let board = workspace::parse_agent_board(text)?;
        project.set_board(board.clone());
        Ok(board)
    }

    /// Stages 1–3 for the project's goal (or a new one), replacing the
    /// current strategy. Initial key objects of the current strategy carry over.
    pub fn generate_full(
        &self,
        project: &mut Project,
        goal: Option<&str>,
    ) -> Result<StrategyState, ApiError> {
        let current = project.strategy();
        let goal = goal.map(Goal::new).unwrap_or_else(|| current.goal.clone());
        let initial: Vec<_> = current.initial_objects().cloned().collect();
        let strategy =
            self.generator()
                .generate_full_strategy(&goal, &initial, &current.agent_board)?;
        project.goal = goal;
        project.set_strategy(strategy);
        Ok(StrategyState::of(project))
    }

    /// Stage 1 only: a fresh outline with empty teams and processes.
    pub fn generate_outline(
        &self,
        project: &mut Project,
        goal: Option<&str>,
    ) -> Result<StrategyState, ApiError> {
        let current = project.strategy();
        let goal = goal.map(Goal::new).unwrap_or_else(|| current.goal.clone());
        let initial: Vec<_> = current.initial_objects().cloned().collect();
        let strategy =
            self.generator()
                .generate_plan_outline(&goal, &initial, &current.agent_board)?;
        project.goal = goal;
        project.set_strategy(strategy);
        Ok(StrategyState::of(project))
    }

    /// Stage 2 for one task. The process is regenerated (stage 3) when it
    /// is empty or no longer valid for the new team.
    pub fn assign(&self, project: &mut Project, task: &str) -> Result<AssignOutcome, ApiError> {
        let mut strategy = project.strategy().clone();
        let id = task_id_of(&strategy, task)?;
        let team = self.generator().assign_agents(&strategy, &id)?;
        let regenerated = self.install_team(&mut strategy, &id, team.clone())?;
        let version = project.set_strategy(strategy);
        Ok(AssignOutcome {
            team,
            process_regenerated: regenerated,
            version,
        })
    }

    fn install_team(
        &self,
        strategy: &mut Strategy,
        id: &TaskId,
        team: Vec<AgentId>,
    ) -> Result<bool, ApiError> {
        let index = strategy.task_index(id).expect("task resolved");
        strategy.tasks[index].team = team.clone();
        let scope = format!("tasks[{index}].");
        let process_ok = !strategy.tasks[index].process.is_empty()
            && !validate_strategy(strategy)
                .errors
                .iter()
                .any(|i| i.path.starts_with(&scope));
        if process_ok {
            return Ok(false);
        }
        let process = self
            .generator()
            .generate_task_process(strategy, id, &team)?;
        strategy.tasks[index].process = process;
        Ok(true)
    }

    /// Stage 3 for one task with its current team.
    pub fn generate_process(
        &self,
        project: &mut Project,
        task: &str,
    ) -> Result<Vec<ActionSpec>, ApiError> {
        let mut strategy = project.strategy().clone();
        let id = task_id_of(&strategy, task)?;
        let team = strategy.task(&id).expect("task resolved").team.clone();
        let process = self
            .generator()
            .generate_task_process(&strategy, &id, &team)?;
        strategy.task_mut(&id).expect("task resolved").process = process.clone();
        project.set_strategy(strategy);
        Ok(process)
    }

    pub fn derive_aspects(&self, project: &Project, task: &str) -> Result<AspectSet, ApiError> {
        let strategy = project.strategy();
        let id = task_id_of(strategy, task)?;
        Ok(self.generator().derive_aspects(strategy, &id)?)
    }

    pub fn score(
        &self,
        project: &Project,
        task: &str,
        aspects: &AspectSet,
    ) -> Result<ScoreMatrix, ApiError> {
        let strategy = project.strategy();
        let id = task_id_of(strategy, task)?;
        Ok(self.generator().score_agents(strategy, &id, aspects)?)
    }

    pub fn edit_task(
        &self,
        project: &mut Project,
        task: &str,
        patch: &TaskPatch,
    ) -> Result<StrategyState, ApiError> {
        let mut strategy = project.strategy().clone();
        let id = task_id_of(&strategy, task)?;
        let t = strategy.task_mut(&id).expect("task resolved");
        if let Some(name) = &patch.step_name {
            if name.trim().is_empty() {
                return Err(ApiError::bad_request("stepName must not be empty").at("stepName"));
            }
            t.step_name = name.trim().to_string();
        }
        if let Some(content) = &patch.task_content {
            if content.trim().is_empty() {
                return Err(
                    ApiError::bad_request("taskContent must not be empty").at("taskContent")
                );
            }
            t.task_content = content.trim().to_string();
        }
        project.set_strategy(strategy);
        Ok(StrategyState::of(project))
    }

    pub fn edit_instruction(
        &self,
        project: &mut Project,
        task: &str,
        index: usize,
        instruction: &str,
    ) -> Result<StrategyState, ApiError> {
        let mut strategy = project.strategy().clone();
        let id = task_id_of(&strategy, task)?;
        let t = strategy.task_mut(&id).expect("task resolved");
        let action = t.process.get_mut(index).ok_or_else(|| {
            ApiError::new("not-found", format!("task '{id}' has no action {index}"))
        })?;
        if instruction.trim().is_empty() {
            return Err(ApiError::bad_request("instruction must not be empty").at("instruction"));
        }
        action.instruction = instruction.trim().to_string();
        project.set_strategy(strategy);
        Ok(StrategyState::of(project))
    }

    /// Replaces the current strategy wholesale; it must validate.
    pub fn put_strategy(
        &self,
        project: &mut Project,
        strategy: Strategy,
    ) -> Result<StrategyState, ApiError> {
        let report = validate_strategy(&strategy);
        if !report.is_valid() {
            return Err(ApiError::validation(&report));
        }
        project.set_strategy(strategy);
        Ok(StrategyState::of(project))
    }

    pub fn open_session(
        &self,
        project: &mut Project,
        kind: SessionKind,
        task: Option<&str>,
        at: DateTime<Utc>,
    ) -> Result<ExplorationSession, ApiError> {
        let strategy = project.strategy().clone();
        let need_task = || -> Result<TaskId, ApiError> {
            let key = task.ok_or_else(|| {
                ApiError::bad_request("this session kind needs a task").at("taskId")
            })?;
            task_id_of(&strategy, key)
        };
        let seed = match kind {
            SessionKind::PlanOutline => SessionSeed::PlanOutline {
                strategy: strategy.clone(),
            },
            SessionKind::TaskProcess => SessionSeed::TaskProcess {
                task_id: need_task()?,
                strategy: strategy.clone(),
            },
            SessionKind::AgentAssignment => SessionSeed::AgentAssignment {
                task_id: need_task()?,
                strategy: strategy.clone(),
                aspects: AspectSet::default(),
                scores: None,
            },
        };
        let id = project.next_session_id();
        let session = open_session(&mut project.versions, id, seed, at)?;
        project.exploration_sessions.push(session.clone());
        Ok(session)
    }

    /// The most recent session of `kind` (for `task`, when given) whose
    /// context is still the current strategy.
    pub fn latest_session(
        &self,
        project: &Project,
        kind: SessionKind,
        task: Option<&TaskId>,
    ) -> Option<String> {
        project
            .exploration_sessions
            .iter()
            .rev()
            .find(|s| {
                s.kind == kind
                    && s.context == project.current_strategy
                    && (task.is_none() || s.task_id.as_ref() == task)
            })
            .map(|s| s.id.clone())
    }

    pub fn spawn(
        &self,
        project: &mut Project,
        session: &str,
        request: &SpawnRequest,
        at: DateTime<Utc>,
    ) -> Result<Vec<NodeId>, ApiError> {
        let mut versions = project.versions.clone();
        let mut s = project.session(session)?.clone();
        let ids = s.spawn_branches(&mut versions, &self.generator(), request, at)?;
        project.versions = versions;
        *project.session_mut(session)? = s;
        Ok(ids)
    }

    pub fn set_baseline(
        &self,
        project: &mut Project,
        session: &str,
        node: &NodeId,
    ) -> Result<(), ApiError> {
        project.session_mut(session)?.set_baseline(node)?;
        Ok(())
    }

    /// Adopts a node and installs its payload into the working strategy.
    pub fn adopt(
        &self,
        project: &mut Project,
        session: &str,
        node: &NodeId,
    ) -> Result<StrategyState, ApiError> {
        let mut s = project.session(session)?.clone();
        let payload = s.adopt(&project.versions, node)?;
        let mut strategy = project.strategy().clone();
        match payload {
            Payload::Strategy { strategy: adopted } => strategy = adopted,
            Payload::Process { task_id, actions } => {
                let t = strategy.task_mut(&task_id).ok_or_else(|| {
                    ApiError::new(
                        "unknown-task",
                        format!("task '{task_id}' is no longer in the plan"),
                    )
                })?;
                t.process = actions;
            }
            Payload::Team { task_id, team } => {
                if strategy.task(&task_id).is_none() {
                    return Err(ApiError::new(
                        "unknown-task",
                        format!("task '{task_id}' is no longer in the plan"),
                    ));
                }
                self.install_team(&mut strategy, &task_id, team)?;
            }
        }
        let report = validate_strategy(&strategy);
        if !report.is_valid() {
            return Err(ApiError::validation(&report));
        }
        *project.session_mut(session)? = s;
        project.set_strategy(strategy);
        Ok(StrategyState::of(project))
    }

    pub fn edit_team(
        &self,
        project: &mut Project,
        session: &str,
        add: &[AgentId],
        remove: &[AgentId],
        at: DateTime<Utc>,
    ) -> Result<Vec<AgentId>, ApiError> {
        let mut versions = project.versions.clone();
        let mut s = project.session(session)?.clone();
        let team = s.edit_team(&mut versions, add, remove, at)?;
        project.versions = versions;
        *project.session_mut(session)? = s;
        Ok(team)
    }

    pub fn edit_aspects(
        &self,
        project: &mut Project,
        session: &str,
        edit: &AspectEdit,
    ) -> Result<AspectSet, ApiError> {
        let mut s = project.session(session)?.clone();
        let task = s
            .task_id
            .clone()
            .ok_or_else(|| ApiError::new("wrong-session-kind", "session has no task"))?;
        let mut aspects = s.assignment()?.aspects.clone();
        if edit.derive {
            let derived = self
                .generator()
                .derive_aspects(s.context(&project.versions)?, &task)?;
            let users: Vec<_> = aspects
                .aspects
                .into_iter()
                .filter(|a| a.source == coordkit_core::genesis::AspectSource::User)
                .collect();
            aspects = derived;
            for u in users {
                if aspects.get(&u.name).is_none() {
                    aspects.aspects.push(u);
                }
            }
        }
        for name in &edit.add {
            aspects.add_user(name)?;
        }
        if let Some(select) = &edit.select {
            let names: Vec<&str> = select.iter().map(String::as_str).collect();
            aspects.select_only(&names)?;
        }
        s.assignment_mut()?.aspects = aspects.clone();
        *project.session_mut(session)? = s;
        Ok(aspects)
    }

    /// Scores the session's full board on all of its aspects.
    pub fn score_session(
        &self,
        project: &mut Project,
        session: &str,
    ) -> Result<ScoreMatrix, ApiError> {
        let mut s = project.session(session)?.clone();
        let task = s
            .task_id
            .clone()
            .ok_or_else(|| ApiError::new("wrong-session-kind", "session has no task"))?;
        let aspects = s.assignment()?.aspects.clone();
        let matrix =
            self.generator()
                .score_agents(s.context(&project.versions)?, &task, &aspects)?;
        s.assignment_mut()?.scores = Some(matrix.clone());
        *project.session_mut(session)? = s;
        Ok(matrix)
    }

    pub fn rank(&self, project: &Project, session: &str) -> Result<Vec<RankedAgent>, ApiError> {
        Ok(project.session(session)?.rank_agents(&project.versions)?)
    }

    /// Whether the current strategy can be executed as it stands.
    pub fn check_runnable(&self, strategy: &Strategy) -> Result<(), ApiError> {
        let report = validate_strategy(strategy);
        if !report.is_valid() {
            return Err(ApiError::validation(&report));
        }
        if strategy.tasks.is_empty() {
            return Err(ApiError::new(
                "not-executable",
                "the plan has no tasks yet; generate one first",
            ));
        }
        check_executable(strategy)?;
        Ok(())
    }

    /// Executes the current strategy. With `project_path` the record's log
    /// is written next to the project file and indexed.
    pub fn run(
        &self,
        project: &mut Project,
        project_path: Option<&Path>,
        run_id: &str,
        on_event: &mut dyn FnMut(&RunEvent),
    ) -> Result<ExecutionRecord, ApiError> {
        let strategy = project.strategy().clone();
        self.check_runnable(&strategy)?;
        let version = project.current_strategy.clone();
        let record = execute(
            &strategy,
            &version,
            run_id,
            &self.gateway,
            &self.execution_options(),
            on_event,
        )?;
        if let Some(path) = project_path {
            workspace::record_run(project, path, &record)?;
        }
        Ok(record)
    }
}

/// Predecessors of `node` in the record's trace, topologically ordered.
pub fn trace(
    record: &ExecutionRecord,
    strategy: &Strategy,
    node: &str,
) -> Result<TraceOutcome, ApiError> {
    let node: NodeRef = node.trim().parse().map_err(|_| {
        ApiError::bad_request(format!("'{node}' is not a node reference")).at("node")
    })?;
    let graph = build_trace(record, strategy)?;
    let predecessors = trace_back(&graph, &node)?;
    Ok(TraceOutcome {
        node,
        predecessors,
        graph,
    })
}

/// The strategy a record was produced from.
pub fn record_strategy<'a>(
    project: &'a Project,
    record: &ExecutionRecord,
) -> Result<&'a Strategy, ApiError> {
    project
        .versions
        .strategy(&record.strategy_version)
        .ok_or_else(|| {
            ApiError::new(
                "missing-version",
                format!(
                    "strategy version {} is not in the project",
                    record.strategy_version
                ),
            )
        })
}
