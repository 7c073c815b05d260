//! Read-only projections of a strategy for front ends: the key-object/task
//! bipartite graph, agent cards for a focused task, and per-task summaries.

use crate::model::{AgentId, InteractionType, ObjectId, Strategy, TaskId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EdgeKind {
    /// key object → task that reads it
    Input,
    /// task → key object it produces
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectNode {
    pub id: ObjectId,
    pub name: String,
    pub initial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskNode {
    pub id: TaskId,
    pub step_name: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutlineEdge {
    pub object_id: ObjectId,
    pub task_id: TaskId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanOutlineView {
    pub objects: Vec<ObjectNode>,
    pub tasks: Vec<TaskNode>,
    pub edges: Vec<OutlineEdge>,
}

pub fn plan_outline(strategy: &Strategy) -> PlanOutlineView {
    let objects = strategy
        .key_objects
        .iter()
        .map(|o| ObjectNode {
            id: o.id.clone(),
            name: o.name.clone(),
            initial: o.is_initial(),
        })
        .collect();
    let mut tasks = Vec::new();
    let mut edges = Vec::new();
    for (index, t) in strategy.tasks.iter().enumerate() {
        tasks.push(TaskNode {
            id: t.id.clone(),
            step_name: t.step_name.clone(),
            index,
        });
        for input in &t.input_object_ids {
            edges.push(OutlineEdge {
                object_id: input.clone(),
                task_id: t.id.clone(),
                kind: EdgeKind::Input,
            });
        }
        edges.push(OutlineEdge {
            object_id: t.output_object_id.clone(),
            task_id: t.id.clone(),
            kind: EdgeKind::Output,
        });
    }
    PlanOutlineView {
        objects,
        tasks,
        edges,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlannedAction {
    pub index: usize,
    pub interaction_type: InteractionType,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentCard {
    pub id: AgentId,
    pub name: String,
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar: Option<String>,
    pub assigned: bool,
    /// The agent's actions in the focused task.
    pub actions: Vec<PlannedAction>,
}

/// Board cards; with a focused task its team floats to the top (board
/// order otherwise preserved) and carries its planned actions.
pub fn agent_board(strategy: &Strategy, focus: Option<&TaskId>) -> Vec<AgentCard> {
    let task = focus.and_then(|id| strategy.task(id));
    let mut cards: Vec<AgentCard> = strategy
        .agent_board
        .agents
        .iter()
        .map(|a| AgentCard {
            id: a.id.clone(),
            name: a.name.clone(),
            profile: a.profile.clone(),
            avatar: a.avatar.clone(),
            assigned: task.is_some_and(|t| t.team.contains(&a.id)),
            actions: task
                .map(|t| {
                    t.process
                        .iter()
                        .enumerate()
                        .filter(|(_, x)| x.agent_id == a.id)
                        .map(|(index, x)| PlannedAction {
                            index,
                            interaction_type: x.interaction_type,
                            instruction: x.instruction.clone(),
                        })
                        .collect()
                })
                .unwrap_or_default(),
        })
        .collect();
    cards.sort_by_key(|c| !c.assigned);
    cards
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionLine {
    pub index: usize,
    pub agent: String,
    pub interaction_type: InteractionType,
    pub instruction: String,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSummary {
    pub task_id: TaskId,
    pub step_name: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub agents: Vec<String>,
    pub content: String,
    pub actions: Vec<ActionLine>,
}

fn object_name(strategy: &Strategy, id: &ObjectId) -> String {
    strategy
        .object(id)
        .map_or_else(|| id.to_string(), |o| o.name.clone())
}

fn agent_name(strategy: &Strategy, id: &AgentId) -> String {
    strategy
        .agent_board
        .get(id)
        .map_or_else(|| id.to_string(), |a| a.name.clone())
}

pub fn task_process(strategy: &Strategy) -> Vec<TaskSummary> {
    strategy
        .tasks
        .iter()
        .map(|t| TaskSummary {
            task_id: t.id.clone(),
            step_name: t.step_name.clone(),
            inputs: t
                .input_object_ids
                .iter()
                .map(|i| object_name(strategy, i))
                .collect(),
            output: object_name(strategy, &t.output_object_id),
            agents: t.team.iter().map(|a| agent_name(strategy, a)).collect(),
            content: t.task_content.clone(),
            actions: t
                .process
                .iter()
                .enumerate()
                .map(|(index, a)| ActionLine {
                    index,
                    agent: agent_name(strategy, &a.agent_id),
                    interaction_type: a.interaction_type,
                    instruction: a.instruction.clone(),
                    inputs: a
                        .important_inputs
                        .iter()
                        .map(|i| match i {
                            crate::model::InputRef::KeyObject(o) => object_name(strategy, o),
                            crate::model::InputRef::Action(k) => format!("action {k}"),
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect()
}

/// Everything the four linked views need in one payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Views {
    pub plan_outline: PlanOutlineView,
    pub agent_board: Vec<AgentCard>,
    pub task_process: Vec<TaskSummary>,
}

pub fn views(strategy: &Strategy, focus: Option<&TaskId>) -> Views {
    Views {
        plan_outline: plan_outline(strategy),
        agent_board: agent_board(strategy, focus),
        task_process: task_process(strategy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn outline_has_one_output_edge_per_task() {
        let s = fixtures::novel_strategy();
        let v = plan_outline(&s);
        assert_eq!(v.tasks.len(), 5);
        let outputs = v
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Output)
            .count();
        assert_eq!(outputs, 5);
        let inputs: usize = s.tasks.iter().map(|t| t.input_object_ids.len()).sum();
        assert_eq!(v.edges.len(), outputs + inputs);
    }

    #[test]
    fn focused_team_floats_up() {
        let s = fixtures::novel_strategy();
        let last = s.tasks.last().unwrap();
        let cards = agent_board(&s, Some(&last.id));
        let team: Vec<_> = cards
            .iter()
            .take_while(|c| c.assigned)
            .map(|c| c.id.clone())
            .collect();
        let mut expected = last.team.clone();
        // board order within the team
        expected.sort_by_key(|a| s.agent_board.position(a));
        assert_eq!(team, expected);
        let actions: usize = cards.iter().map(|c| c.actions.len()).sum();
        assert_eq!(actions, last.process.len());
    }
}
