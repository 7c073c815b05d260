//! Strategy generation.
//!
//! A strategy is produced in three stages: the plan outline from the goal
//! and initial key objects, then a team for each task, then each task's
//! action process from the team's profiles. The same machinery derives
//! capability aspects, scores agents on them, and regenerates plan or
//! process suffixes from a branch point under a user requirement.
//!
//! Every model response passes through the gateway's repair loop with a
//! check that converts it and runs strategy validation, so nothing that
//! fails validation is ever returned.

mod prompts;
mod wire;

pub use prompts::Prompts;
pub use wire::IdAllocator;

use crate::gateway::{
    bindings, parse_shape, CompletionRequest, Gateway, GatewayError, PromptTemplate, Stage,
    GENERATION_TEMPERATURE, SCORING_TEMPERATURE,
};
use crate::model::{
    validate_strategy, ActionSpec, AgentBoard, AgentId, Goal, InputRef, Issue, KeyObject, Strategy,
    TaskId, TaskSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use thiserror::Error;
use wire::{
    assemble_plan, assemble_process, resolve_team, AspectsWire, PlanWire, ProcessWire, ScoresWire,
    TeamWire,
};

pub const DEFAULT_MAX_BRANCHES: usize = 5;
pub const MAX_ASPECT_WORDS: usize = 6;
pub const DERIVED_ASPECT_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectSource {
    Llm,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Aspect {
    pub name: String,
    pub source: AspectSource,
    pub selected: bool,
}

impl Aspect {
    pub fn new(name: impl Into<String>, source: AspectSource) -> Self {
        Self {
            name: name.into(),
            source,
            selected: true,
        }
    }
}

/// Capability dimensions for one task, in display order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AspectSet {
    pub aspects: Vec<Aspect>,
}

fn same_name(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

impl AspectSet {
    pub fn get(&self, name: &str) -> Option<&Aspect> {
        self.aspects.iter().find(|a| same_name(&a.name, name))
    }

    pub fn add_user(&mut self, name: &str) -> Result<(), GenesisError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(GenesisError::EmptyAspect);
        }
        if self.get(name).is_some() {
            return Err(GenesisError::DuplicateAspect(name.to_string()));
        }
        self.aspects.push(Aspect::new(name, AspectSource::User));
        Ok(())
    }

    pub fn set_selected(&mut self, name: &str, selected: bool) -> Result<(), GenesisError> {
        let aspect = self
            .aspects
            .iter_mut()
            .find(|a| same_name(&a.name, name))
            .ok_or_else(|| GenesisError::UnknownAspect(name.to_string()))?;
        aspect.selected = selected;
        Ok(())
    }

    /// Selects exactly the named aspects.
    pub fn select_only(&mut self, names: &[&str]) -> Result<(), GenesisError> {
        for n in names {
            if self.get(n).is_none() {
                return Err(GenesisError::UnknownAspect(n.to_string()));
            }
        }
        for a in &mut self.aspects {
            a.selected = names.iter().any(|n| same_name(n, &a.name));
        }
        Ok(())
    }

    pub fn selected(&self) -> Vec<String> {
        self.aspects
            .iter()
            .filter(|a| a.selected)
            .map(|a| a.name.clone())
            .collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.aspects.iter().map(|a| a.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreRow {
    pub agent_id: AgentId,
    pub scores: BTreeMap<String, u8>,
    pub rationales: BTreeMap<String, String>,
}

/// Aspect × agent capability scores (1–5) with rationales, one row per
/// board agent in board order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreMatrix {
    pub task_id: TaskId,
    pub aspects: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreMatrix {
    pub fn row(&self, agent: &AgentId) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| &r.agent_id == agent)
    }

    /// Unweighted mean over `aspects`; `None` if any cell is missing or the
    /// selection is empty.
    pub fn mean(&self, agent: &AgentId, aspects: &[String]) -> Option<f64> {
        if aspects.is_empty() {
            return None;
        }
        let row = self.row(agent)?;
        let mut sum = 0u32;
        for a in aspects {
            sum += u32::from(*row.scores.get(a)?);
        }
        Some(f64::from(sum) / aspects.len() as f64)
    }

    /// Every row has a score and a rationale for each listed aspect, and
    /// every score lies in 1..=5.
    pub fn is_complete_for(&self, aspects: &[String]) -> bool {
        self.rows.iter().all(|r| {
            aspects.iter().all(|a| {
                r.scores.get(a).is_some_and(|s| (1..=5).contains(s))
                    && r.rationales.get(a).is_some_and(|t| !t.trim().is_empty())
            })
        })
    }
}

/// Where to branch and what the variants should achieve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BranchRequest {
    /// Task index for plans, action index for processes. Variants keep
    /// everything before it and regenerate everything at and after it.
    pub branch_point: usize,
    pub requirement: String,
    pub count: usize,
}

#[derive(Debug, Error)]
pub enum GenesisError {
    #[error("{stage} generation failed{}: {source}", task.as_ref().map(|t| format!(" for task '{t}'")).unwrap_or_default())]
    Generation {
        stage: Stage,
        task: Option<TaskId>,
        #[source]
        source: GatewayError,
    },
    #[error("goal is empty")]
    EmptyGoal,
    #[error("agent board is empty")]
    EmptyBoard,
    #[error("team is empty")]
    EmptyTeam,
    #[error("agent '{0}' is not on the board")]
    UnknownAgent(AgentId),
    #[error("unknown task '{0}'")]
    UnknownTask(TaskId),
    #[error("branch point {point} is outside 0..={len}")]
    InvalidBranchPoint { point: usize, len: usize },
    #[error("branch count {count} is outside 1..={max}")]
    InvalidBranchCount { count: usize, max: usize },
    #[error("branch requirement is empty")]
    EmptyRequirement,
    #[error("aspect name is empty")]
    EmptyAspect,
    #[error("duplicate aspect '{0}'")]
    DuplicateAspect(String),
    #[error("unknown aspect '{0}'")]
    UnknownAspect(String),
    #[error("at least one aspect is required")]
    NoAspects,
    #[error("generated strategy failed validation: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidResult(Vec<Issue>),
}

impl GenesisError {
    pub fn code(&self) -> &'static str {
        match self {
            GenesisError::Generation { .. } => "generation-failed",
            GenesisError::EmptyGoal => "empty-goal",
            GenesisError::EmptyBoard => "empty-board",
            GenesisError::EmptyTeam => "empty-team",
            GenesisError::UnknownAgent(_) => "unknown-agent",
            GenesisError::UnknownTask(_) => "unknown-task",
            GenesisError::InvalidBranchPoint { .. } => "invalid-branch-point",
            GenesisError::InvalidBranchCount { .. } => "invalid-branch-count",
            GenesisError::EmptyRequirement => "empty-requirement",
            GenesisError::EmptyAspect => "empty-aspect",
            GenesisError::DuplicateAspect(_) => "duplicate-aspect",
            GenesisError::UnknownAspect(_) => "unknown-aspect",
            GenesisError::NoAspects => "no-aspects",
            GenesisError::InvalidResult(_) => "invalid-result",
        }
    }

    /// The underlying gateway failure, when there is one.
    pub fn gateway_error(&self) -> Option<&GatewayError> {
        match self {
            GenesisError::Generation { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub provider: String,
    pub seed: Option<u64>,
    pub max_branches: usize,
}

impl GenerationOptions {
    pub fn new(provider: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            seed: None,
            max_branches: DEFAULT_MAX_BRANCHES,
        }
    }
}

fn describe_objects<'a>(objects: impl Iterator<Item = &'a KeyObject>) -> String {
    let lines: Vec<String> = objects
        .map(|o| {
            if o.description.trim().is_empty() {
                format!("- {}", o.name)
            } else {
                format!("- {}: {}", o.name, o.description)
            }
        })
        .collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

fn object_names(strategy: &Strategy, ids: &[crate::model::ObjectId]) -> String {
    if ids.is_empty() {
        return "(none)".to_string();
    }
    ids.iter()
        .map(|id| {
            strategy
                .object(id)
                .map_or_else(|| id.to_string(), |o| o.name.clone())
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn describe_task(strategy: &Strategy, task: &TaskSpec) -> String {
    format!(
        "Name: {}\nContent: {}\nInput key objects: {}\nOutput key object: {}",
        task.step_name,
        task.task_content,
        object_names(strategy, &task.input_object_ids),
        object_names(strategy, std::slice::from_ref(&task.output_object_id)),
    )
}

fn describe_agents<'a>(agents: impl Iterator<Item = &'a crate::model::AgentProfile>) -> String {
    agents
        .map(|a| format!("- {}: {}", a.name, a.profile))
        .collect::<Vec<_>>()
        .join("\n")
}

fn describe_plan(strategy: &Strategy) -> String {
    if strategy.tasks.is_empty() {
        return "(no steps)".to_string();
    }
    strategy
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                "Step {i}: {}\n  Content: {}\n  Inputs: {}\n  Output: {}",
                t.step_name,
                t.task_content,
                object_names(strategy, &t.input_object_ids),
                object_names(strategy, std::slice::from_ref(&t.output_object_id)),
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn describe_process(strategy: &Strategy, process: &[ActionSpec]) -> String {
    if process.is_empty() {
        return "(no actions)".to_string();
    }
    process
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let agent = strategy
                .agent_board
                .get(&a.agent_id)
                .map_or_else(|| a.agent_id.to_string(), |p| p.name.clone());
            let inputs: Vec<String> = a
                .important_inputs
                .iter()
                .map(|r| match r {
                    InputRef::KeyObject(id) => object_names(strategy, std::slice::from_ref(id)),
                    InputRef::Action(k) => format!("action {k}"),
                })
                .collect();
            format!(
                "Action {i} [{}] {agent}: {} (inputs: {})",
                a.interaction_type.as_str(),
                a.instruction,
                if inputs.is_empty() {
                    "none".to_string()
                } else {
                    inputs.join(", ")
                }
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn variant_hint(index: usize, count: usize) -> String {
    if count == 1 {
        "Produce one variant.".to_string()
    } else {
        format!(
            "This is variant {} of {count}; make it clearly different from the other variants while meeting the requirement.",
            index + 1
        )
    }
}

/// Runs generation stages against the gateway.
#[derive(Clone)]
pub struct Generator {
    gateway: Arc<Gateway>,
    prompts: Arc<Prompts>,
    options: GenerationOptions,
}

impl Generator {
    pub fn new(gateway: Arc<Gateway>, options: GenerationOptions) -> Self {
        Self {
            gateway,
            prompts: Arc::new(Prompts::default()),
            options,
        }
    }

    pub fn with_prompts(mut self, prompts: Prompts) -> Self {
        self.prompts = Arc::new(prompts);
        self
    }

    /// Same generator routed to another provider, e.g. a faster model.
    pub fn with_provider(&self, provider: impl Into<String>) -> Self {
        let mut g = self.clone();
        g.options.provider = provider.into();
        g
    }

    pub fn options(&self) -> &GenerationOptions {
        &self.options
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    fn request(
        &self,
        template: &PromptTemplate,
        binds: BTreeMap<String, String>,
        temperature: f32,
    ) -> CompletionRequest {
        CompletionRequest {
            template: template.clone(),
            bindings: binds,
            provider: self.options.provider.clone(),
            temperature,
            seed: self.options.seed,
        }
    }

    fn run<T>(
        &self,
        request: &CompletionRequest,
        task: Option<&TaskId>,
        check: impl Fn(&Value) -> Result<T, Vec<String>>,
    ) -> Result<T, GenesisError> {
        self.gateway
            .complete_structured(request, check)
            .map(|r| r.value)
            .map_err(|source| GenesisError::Generation {
                stage: request.template.stage(),
                task: task.cloned(),
                source,
            })
    }

    fn task_index(strategy: &Strategy, task_id: &TaskId) -> Result<usize, GenesisError> {
        strategy
            .task_index(task_id)
            .ok_or_else(|| GenesisError::UnknownTask(task_id.clone()))
    }

    /// Stage 1. Returns a strategy holding the initial objects, the new
    /// output objects and the outlined tasks (teams and processes empty).
    pub fn generate_plan_outline(
        &self,
        goal: &Goal,
        initial_objects: &[KeyObject],
        board: &AgentBoard,
    ) -> Result<Strategy, GenesisError> {
        if goal.is_blank() {
            return Err(GenesisError::EmptyGoal);
        }
        let template = Strategy::new(goal.clone(), initial_objects.to_vec(), board.clone());
        let request = self.request(
            &self.prompts.plan_outline,
            bindings([
                ("goal", goal.as_str().to_string()),
                ("initial_objects", describe_objects(initial_objects.iter())),
            ]),
            GENERATION_TEMPERATURE,
        );
        self.run(&request, None, |doc| {
            let wire: PlanWire = parse_shape(doc)?;
            if wire.tasks.is_empty() {
                return Err(vec!["plan has no steps".to_string()]);
            }
            assemble_plan(&template, 0, &wire, None)
        })
    }

    /// Stage 2 for one task of `strategy`.
    pub fn assign_agents(
        &self,
        strategy: &Strategy,
        task_id: &TaskId,
    ) -> Result<Vec<AgentId>, GenesisError> {
        let index = Self::task_index(strategy, task_id)?;
        let board = &strategy.agent_board;
        match board.agents.as_slice() {
            [] => return Err(GenesisError::EmptyBoard),
            [only] => return Ok(vec![only.id.clone()]),
            _ => {}
        }
        let task = &strategy.tasks[index];
        let request = self.request(
            &self.prompts.agent_assignment,
            bindings([
                ("goal", strategy.goal.as_str().to_string()),
                ("task", describe_task(strategy, task)),
                ("board", describe_agents(board.agents.iter())),
            ]),
            GENERATION_TEMPERATURE,
        );
        self.run(&request, Some(task_id), |doc| {
            let wire: TeamWire = parse_shape(doc)?;
            resolve_team(strategy, &wire)
        })
    }

    fn check_team(strategy: &Strategy, team: &[AgentId]) -> Result<(), GenesisError> {
        if team.is_empty() {
            return Err(GenesisError::EmptyTeam);
        }
        for member in team {
            if !strategy.agent_board.contains(member) {
                return Err(GenesisError::UnknownAgent(member.clone()));
            }
        }
        Ok(())
    }

    fn team_profiles(strategy: &Strategy, team: &[AgentId]) -> String {
        describe_agents(team.iter().filter_map(|id| strategy.agent_board.get(id)))
    }

    /// Stage 3 for one task, given its team. Agents are described by their
    /// full profiles.
    pub fn generate_task_process(
        &self,
        strategy: &Strategy,
        task_id: &TaskId,
        team: &[AgentId],
    ) -> Result<Vec<ActionSpec>, GenesisError> {
        let index = Self::task_index(strategy, task_id)?;
        Self::check_team(strategy, team)?;
        let task = &strategy.tasks[index];
        let request = self.request(
            &self.prompts.task_process,
            bindings([
                ("goal", strategy.goal.as_str().to_string()),
                ("task", describe_task(strategy, task)),
                ("team", Self::team_profiles(strategy, team)),
            ]),
            GENERATION_TEMPERATURE,
        );
        self.run(&request, Some(task_id), |doc| {
            let wire: ProcessWire = parse_shape(doc)?;
            assemble_process(strategy, index, team, &[], &wire)
        })
    }

    /// All three stages: outline, then team and process for each task.
    pub fn generate_full_strategy(
        &self,
        goal: &Goal,
        initial_objects: &[KeyObject],
        board: &AgentBoard,
    ) -> Result<Strategy, GenesisError> {
        if board.is_empty() {
            return Err(GenesisError::EmptyBoard);
        }
        let mut strategy = self.generate_plan_outline(goal, initial_objects, board)?;
        let ids: Vec<TaskId> = strategy.tasks.iter().map(|t| t.id.clone()).collect();
        for id in &ids {
            let team = self.assign_agents(&strategy, id)?;
            let process = self.generate_task_process(&strategy, id, &team)?;
            let task = strategy.task_mut(id).expect("task exists");
            task.team = team;
            task.process = process;
        }
        let report = validate_strategy(&strategy);
        if !report.is_valid() {
            return Err(GenesisError::InvalidResult(report.errors));
        }
        Ok(strategy)
    }

    /// Three capability aspects that matter for a task.
    pub fn derive_aspects(
        &self,
        strategy: &Strategy,
        task_id: &TaskId,
    ) -> Result<AspectSet, GenesisError> {
        let index = Self::task_index(strategy, task_id)?;
        let task = &strategy.tasks[index];
        let request = self.request(
            &self.prompts.aspect_derivation,
            bindings([
                ("goal", strategy.goal.as_str().to_string()),
                ("task", describe_task(strategy, task)),
            ]),
            SCORING_TEMPERATURE,
        );
        self.run(&request, Some(task_id), |doc| {
            let wire: AspectsWire = parse_shape(doc)?;
            let mut errors = Vec::new();
            if wire.aspects.len() != DERIVED_ASPECT_COUNT {
                errors.push(format!(
                    "expected exactly {DERIVED_ASPECT_COUNT} aspects, got {}",
                    wire.aspects.len()
                ));
            }
            let mut set = AspectSet::default();
            for name in &wire.aspects {
                let words = name.split_whitespace().count();
                if words == 0 {
                    errors.push("aspect name is empty".to_string());
                } else if words > MAX_ASPECT_WORDS {
                    errors.push(format!(
                        "aspect '{name}' has more than {MAX_ASPECT_WORDS} words"
                    ));
                } else if set.get(name).is_some() {
                    errors.push(format!("aspect '{name}' is listed twice"));
                } else {
                    set.aspects
                        .push(Aspect::new(name.trim(), AspectSource::Llm));
                }
            }
            if errors.is_empty() {
                Ok(set)
            } else {
                Err(errors)
            }
        })
    }

    /// Scores every board agent on every aspect in the set.
    pub fn score_agents(
        &self,
        strategy: &Strategy,
        task_id: &TaskId,
        aspects: &AspectSet,
    ) -> Result<ScoreMatrix, GenesisError> {
        let index = Self::task_index(strategy, task_id)?;
        if aspects.aspects.is_empty() {
            return Err(GenesisError::NoAspects);
        }
        let board = &strategy.agent_board;
        if board.is_empty() {
            return Err(GenesisError::EmptyBoard);
        }
        let task = &strategy.tasks[index];
        let names = aspects.names();
        let request = self.request(
            &self.prompts.agent_scoring,
            bindings([
                ("goal", strategy.goal.as_str().to_string()),
                ("task", describe_task(strategy, task)),
                (
                    "aspects",
                    names
                        .iter()
                        .map(|n| format!("- {n}"))
                        .collect::<Vec<_>>()
                        .join("\n"),
                ),
                ("board", describe_agents(board.agents.iter())),
            ]),
            SCORING_TEMPERATURE,
        );
        self.run(&request, Some(task_id), |doc| {
            let wire: ScoresWire = parse_shape(doc)?;
            let mut errors = Vec::new();
            let mut cells: HashMap<(AgentId, String), (u8, String)> = HashMap::new();
            for (k, cell) in wire.scores.iter().enumerate() {
                let Some(agent) = board.resolve(&cell.agent) else {
                    errors.push(format!(
                        "scores[{k}]: agent '{}' is not on the board",
                        cell.agent
                    ));
                    continue;
                };
                let Some(aspect) = aspects.get(&cell.aspect) else {
                    errors.push(format!("scores[{k}]: unknown aspect '{}'", cell.aspect));
                    continue;
                };
                if !(1..=5).contains(&cell.score) {
                    errors.push(format!("scores[{k}]: score {} is outside 1..5", cell.score));
                    continue;
                }
                if cell.rationale.trim().is_empty() {
                    errors.push(format!("scores[{k}]: rationale is empty"));
                    continue;
                }
                let key = (agent.id.clone(), aspect.name.clone());
                if cells
                    .insert(key, (cell.score as u8, cell.rationale.trim().to_string()))
                    .is_some()
                {
                    errors.push(format!(
                        "scores[{k}]: '{}' is scored twice on '{}'",
                        agent.name, aspect.name
                    ));
                }
            }
            let mut rows = Vec::new();
            for agent in &board.agents {
                let mut row = ScoreRow {
                    agent_id: agent.id.clone(),
                    scores: BTreeMap::new(),
                    rationales: BTreeMap::new(),
                };
                for name in &names {
                    match cells.get(&(agent.id.clone(), name.clone())) {
                        Some((score, why)) => {
                            row.scores.insert(name.clone(), *score);
                            row.rationales.insert(name.clone(), why.clone());
                        }
                        None => {
                            errors.push(format!("missing score for '{}' on '{name}'", agent.name))
                        }
                    }
                }
                rows.push(row);
            }
            if errors.is_empty() {
                Ok(ScoreMatrix {
                    task_id: task_id.clone(),
                    aspects: names.clone(),
                    rows,
                })
            } else {
                Err(errors)
            }
        })
    }

    fn check_branch(&self, request: &BranchRequest, len: usize) -> Result<(), GenesisError> {
        if request.requirement.trim().is_empty() {
            return Err(GenesisError::EmptyRequirement);
        }
        if request.count == 0 || request.count > self.options.max_branches {
            return Err(GenesisError::InvalidBranchCount {
                count: request.count,
                max: self.options.max_branches,
            });
        }
        if request.branch_point > len {
            return Err(GenesisError::InvalidBranchPoint {
                point: request.branch_point,
                len,
            });
        }
        Ok(())
    }

    /// `count` variants of the plan that keep tasks before the branch point
    /// verbatim and regenerate the rest under the requirement. Variants are
    /// generated one after another and returned in variant order.
    pub fn branch_plan(
        &self,
        baseline: &Strategy,
        request: &BranchRequest,
    ) -> Result<Vec<Strategy>, GenesisError> {
        self.check_branch(request, baseline.tasks.len())?;
        let mut variants = Vec::with_capacity(request.count);
        for v in 0..request.count {
            let completion = self.request(
                &self.prompts.plan_branch,
                bindings([
                    ("goal", baseline.goal.as_str().to_string()),
                    (
                        "initial_objects",
                        describe_objects(baseline.initial_objects()),
                    ),
                    ("baseline", describe_plan(baseline)),
                    ("branch_point", request.branch_point.to_string()),
                    ("requirement", request.requirement.trim().to_string()),
                    ("variant", variant_hint(v, request.count)),
                ]),
                GENERATION_TEMPERATURE,
            );
            let variant = self.run(&completion, None, |doc| {
                let wire: PlanWire = parse_shape(doc)?;
                let strategy =
                    assemble_plan(baseline, request.branch_point, &wire, Some(baseline))?;
                if strategy.tasks.is_empty() {
                    return Err(vec!["plan has no steps".to_string()]);
                }
                Ok(strategy)
            })?;
            variants.push(variant);
        }
        Ok(variants)
    }

    /// Process-level counterpart of [`Generator::branch_plan`]: variants of
    /// `baseline_process` for one task, keeping actions before the branch
    /// point.
    pub fn branch_process(
        &self,
        strategy: &Strategy,
        task_id: &TaskId,
        baseline_process: &[ActionSpec],
        request: &BranchRequest,
    ) -> Result<Vec<Vec<ActionSpec>>, GenesisError> {
        let index = Self::task_index(strategy, task_id)?;
        self.check_branch(request, baseline_process.len())?;
        let task = &strategy.tasks[index];
        Self::check_team(strategy, &task.team)?;
        let prefix = &baseline_process[..request.branch_point];
        let mut variants = Vec::with_capacity(request.count);
        for v in 0..request.count {
            let completion = self.request(
                &self.prompts.process_branch,
                bindings([
                    ("goal", strategy.goal.as_str().to_string()),
                    ("task", describe_task(strategy, task)),
                    ("team", Self::team_profiles(strategy, &task.team)),
                    ("baseline", describe_process(strategy, baseline_process)),
                    ("branch_point", request.branch_point.to_string()),
                    ("requirement", request.requirement.trim().to_string()),
                    ("variant", variant_hint(v, request.count)),
                ]),
                GENERATION_TEMPERATURE,
            );
            let variant = self.run(&completion, Some(task_id), |doc| {
                let wire: ProcessWire = parse_shape(doc)?;
                assemble_process(strategy, index, &task.team, prefix, &wire)
            })?;
            variants.push(variant);
        }
        Ok(variants)
    }
}
