//! Shapes the model is asked to return, and their conversion into strategy
//! types. Models name agents and key objects; ids are assigned here.

use crate::model::{
    validate_strategy, ActionSpec, AgentId, InputRef, InteractionType, KeyObject, ObjectId, Origin,
    Strategy, TaskId, TaskSpec,
};
use serde::Deserialize;
use std::collections::{HashMap, HashSet};

#[derive(Debug, Deserialize)]
pub struct PlanWire {
    pub tasks: Vec<TaskWire>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskWire {
    pub step_name: String,
    pub task_content: String,
    #[serde(default)]
    pub input_objects: Vec<String>,
    pub output_object: String,
    #[serde(default)]
    pub output_description: String,
}

#[derive(Debug, Deserialize)]
pub struct TeamWire {
    pub team: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct ProcessWire {
    pub actions: Vec<ActionWire>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionWire {
    pub agent: String,
    pub instruction: String,
    pub interaction_type: InteractionType,
    #[serde(default)]
    pub important_inputs: Vec<InputWire>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InputWire {
    KeyObject(String),
    Action(usize),
}

#[derive(Debug, Deserialize)]
pub struct AspectsWire {
    pub aspects: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct ScoresWire {
    pub scores: Vec<CellWire>,
}

#[derive(Debug, Deserialize)]
pub struct CellWire {
    pub agent: String,
    pub aspect: String,
    pub score: i64,
    pub rationale: String,
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Hands out `task-N` / `obj-N` ids past every numeric suffix already used.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next_task: usize,
    next_object: usize,
}

fn suffix_number(id: &str, prefix: &str) -> Option<usize> {
    id.strip_prefix(prefix)?.parse().ok()
}

impl IdAllocator {
    pub fn for_strategy(strategy: &Strategy) -> Self {
        let next_task = strategy
            .tasks
            .iter()
            .filter_map(|t| suffix_number(t.id.as_str(), "task-"))
            .max()
            .map_or(1, |n| n + 1);
        let next_object = strategy
            .key_objects
            .iter()
            .filter_map(|o| suffix_number(o.id.as_str(), "obj-"))
            .max()
            .map_or(1, |n| n + 1);
        Self {
            next_task,
            next_object,
        }
    }

    fn task(&mut self) -> TaskId {
        let id = TaskId::new(format!("task-{}", self.next_task));
        self.next_task += 1;
        id
    }

    fn object(&mut self) -> ObjectId {
        let id = ObjectId::new(format!("obj-{}", self.next_object));
        self.next_object += 1;
        id
    }
}

/// Assembles `prefix` + the model's steps into a full strategy.
///
/// `baseline` (when branching) lets regenerated steps keep the ids, teams
/// and processes of baseline steps they reproduce: a step whose name matches
/// a baseline step at or after the branch point keeps that task id, and an
/// output whose name matches a baseline object keeps that object id. Team
/// and process are carried over only when the step is otherwise unchanged.
pub fn assemble_plan(
    template: &Strategy,
    branch_point: usize,
    wire: &PlanWire,
    baseline: Option<&Strategy>,
) -> Result<Strategy, Vec<String>> {
    let mut ids = IdAllocator::for_strategy(template);
    let prefix = &template.tasks[..branch_point];
    let prefix_ids: HashSet<&TaskId> = prefix.iter().map(|t| &t.id).collect();

    let base_objects: Vec<KeyObject> = template
        .key_objects
        .iter()
        .filter(|o| match &o.origin {
            Origin::Initial => true,
            Origin::TaskOutput { task_id } => prefix_ids.contains(task_id),
        })
        .cloned()
        .collect();

    let reusable_tasks: HashMap<String, &TaskSpec> = baseline
        .map(|b| {
            b.tasks[branch_point.min(b.tasks.len())..]
                .iter()
                .map(|t| (norm(&t.step_name), t))
                .collect()
        })
        .unwrap_or_default();
    let base_names: HashSet<String> = base_objects.iter().map(|o| norm(&o.name)).collect();
    let reusable_objects: HashMap<String, &KeyObject> = baseline
        .map(|b| {
            b.key_objects
                .iter()
                .filter(|o| !base_names.contains(&norm(&o.name)))
                .map(|o| (norm(&o.name), o))
                .collect()
        })
        .unwrap_or_default();

    let mut errors = Vec::new();
    let mut names: HashMap<String, ObjectId> = base_objects
        .iter()
        .map(|o| (norm(&o.name), o.id.clone()))
        .collect();
    let mut new_objects = Vec::new();
    let mut used_tasks = HashSet::new();
    let mut planned = Vec::new();

    for (k, step) in wire.tasks.iter().enumerate() {
        let label = format!("tasks[{k}]");
        if step.step_name.trim().is_empty() {
            errors.push(format!("{label}: stepName is empty"));
        }
        if step.task_content.trim().is_empty() {
            errors.push(format!("{label}: taskContent is empty"));
        }
        let out_name = norm(&step.output_object);
        if out_name.is_empty() {
            errors.push(format!("{label}: outputObject is missing"));
            continue;
        }
        if names.contains_key(&out_name) {
            errors.push(format!(
                "{label}: outputObject '{}' already exists; every step must produce a new key object",
                step.output_object
            ));
            continue;
        }

        let task_id = match reusable_tasks.get(&norm(&step.step_name)) {
            Some(t) if used_tasks.insert(t.id.clone()) => t.id.clone(),
            _ => ids.task(),
        };
        let reused = reusable_objects.get(&out_name).copied();
        let object_id = reused.map(|o| o.id.clone()).unwrap_or_else(|| ids.object());
        let description = if step.output_description.trim().is_empty() {
            reused.map(|o| o.description.clone()).unwrap_or_default()
        } else {
            step.output_description.clone()
        };
        names.insert(out_name, object_id.clone());
        new_objects.push(KeyObject {
            id: object_id.clone(),
            name: step.output_object.trim().to_string(),
            description,
            origin: Origin::TaskOutput {
                task_id: task_id.clone(),
            },
            value: None,
        });
        planned.push((k, task_id, object_id));
    }

    let mut tasks = prefix.to_vec();
    for (k, task_id, object_id) in planned {
        let step = &wire.tasks[k];
        let mut inputs = Vec::new();
        for name in &step.input_objects {
            match names.get(&norm(name)) {
                Some(id) => {
                    if !inputs.contains(id) {
                        inputs.push(id.clone());
                    }
                }
                None => errors.push(format!(
                    "tasks[{k}]: input '{name}' is not an initial key object or the output of any step"
                )),
            }
        }
        let mut task = TaskSpec {
            id: task_id,
            step_name: step.step_name.trim().to_string(),
            task_content: step.task_content.trim().to_string(),
            input_object_ids: inputs,
            output_object_id: object_id,
            team: Vec::new(),
            process: Vec::new(),
        };
        if let Some(old) = baseline.and_then(|b| b.task(&task.id)) {
            let same = old.step_name == task.step_name
                && old.task_content == task.task_content
                && old.input_object_ids == task.input_object_ids
                && old.output_object_id == task.output_object_id;
            if same {
                task.team = old.team.clone();
                task.process = old.process.clone();
            }
        }
        tasks.push(task);
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut key_objects = base_objects;
    key_objects.extend(new_objects);
    let strategy = Strategy {
        goal: template.goal.clone(),
        key_objects,
        tasks,
        agent_board: template.agent_board.clone(),
    };
    let report = validate_strategy(&strategy);
    if report.is_valid() {
        Ok(strategy)
    } else {
        Err(report.errors.iter().map(ToString::to_string).collect())
    }
}

/// Resolves the model's team into board ids, dropping duplicates.
pub fn resolve_team(strategy: &Strategy, wire: &TeamWire) -> Result<Vec<AgentId>, Vec<String>> {
    let mut errors = Vec::new();
    let mut team = Vec::new();
    for name in &wire.team {
        match strategy.agent_board.resolve(name) {
            Some(agent) => {
                if !team.contains(&agent.id) {
                    team.push(agent.id.clone());
                }
            }
            None => errors.push(format!("agent '{name}' is not on the agent board")),
        }
    }
    if team.is_empty() && errors.is_empty() {
        errors.push("team is empty; choose at least one agent".to_string());
    }
    if errors.is_empty() {
        Ok(team)
    } else {
        Err(errors)
    }
}

/// Converts the model's actions (appended to `prefix`) and checks the
/// resulting process against the task's team and inputs.
pub fn assemble_process(
    strategy: &Strategy,
    task_index: usize,
    team: &[AgentId],
    prefix: &[ActionSpec],
    wire: &ProcessWire,
) -> Result<Vec<ActionSpec>, Vec<String>> {
    let task = &strategy.tasks[task_index];
    let mut errors = Vec::new();
    let mut process = prefix.to_vec();
    for (k, action) in wire.actions.iter().enumerate() {
        let at = prefix.len() + k;
        let agent_id = match strategy.agent_board.resolve(&action.agent) {
            Some(a) if team.contains(&a.id) => a.id.clone(),
            _ => {
                errors.push(format!(
                    "action {at}: agent '{}' is not on this step's team",
                    action.agent
                ));
                continue;
            }
        };
        let mut inputs = Vec::new();
        for input in &action.important_inputs {
            match input {
                InputWire::Action(i) => inputs.push(InputRef::Action(*i)),
                InputWire::KeyObject(name) => {
                    let found = task.input_object_ids.iter().find(|id| {
                        id.as_str() == name.trim()
                            || strategy
                                .object(id)
                                .is_some_and(|o| norm(&o.name) == norm(name))
                    });
                    match found {
                        Some(id) => inputs.push(InputRef::KeyObject(id.clone())),
                        None => errors.push(format!(
                            "action {at}: key object '{name}' is not an input of this step"
                        )),
                    }
                }
            }
        }
        process.push(ActionSpec {
            agent_id,
            instruction: action.instruction.trim().to_string(),
            interaction_type: action.interaction_type,
            important_inputs: inputs,
        });
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    if process.is_empty() {
        return Err(vec!["process has no actions".to_string()]);
    }

    let mut candidate = strategy.clone();
    candidate.tasks[task_index].team = team.to_vec();
    candidate.tasks[task_index].process = process.clone();
    let scope = format!("tasks[{task_index}].");
    let errors: Vec<String> = validate_strategy(&candidate)
        .errors
        .into_iter()
        .filter(|i| i.path.starts_with(&scope))
        .map(|i| i.to_string())
        .collect();
    if errors.is_empty() {
        Ok(process)
    } else {
        Err(errors)
    }
}
