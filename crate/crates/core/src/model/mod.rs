//! Structured coordination strategy: goal, key objects, an ordered plan of
//! tasks, per-task teams and per-task action processes.
//!
//! Everything here is a plain value. Editing a strategy means building a new
//! one; branch exploration relies on that.

mod closure;
mod diff;
mod validate;

pub use closure::{dependency_closure, dependency_edges, ClosureError, NodeRef};
pub use diff::{diff_plans, PlanDiff, PositionChange};
pub use validate::{validate_strategy, Issue, IssueCode, ValidationReport};

use serde::{Deserialize, Serialize};
use std::fmt;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

id_newtype!(
    /// Identifier of a key object, unique within a strategy.
    ObjectId
);
id_newtype!(
    /// Identifier of a task, unique within a strategy.
    TaskId
);
id_newtype!(
    /// Identifier of an agent, unique within a board.
    AgentId
);

/// The collaboration goal. Must be non-blank to validate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Goal(pub String);

impl Goal {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_blank(&self) -> bool {
        self.0.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Origin {
    Initial,
    #[serde(rename_all = "camelCase")]
    TaskOutput {
        task_id: TaskId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KeyObject {
    pub id: ObjectId,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub origin: Origin,
    /// Text payload. Set by the user for initial objects, by execution for
    /// task outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl KeyObject {
    pub fn initial(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: ObjectId::new(id),
            name: name.into(),
            description: String::new(),
            origin: Origin::Initial,
            value: None,
        }
    }

    pub fn is_initial(&self) -> bool {
        matches!(self.origin, Origin::Initial)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentProfile {
    pub id: AgentId,
    pub name: String,
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar: Option<String>,
}

/// Pool of candidate agents, in display order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentBoard {
    pub agents: Vec<AgentProfile>,
}

impl AgentBoard {
    pub fn new(agents: Vec<AgentProfile>) -> Self {
        Self { agents }
    }

    pub fn get(&self, id: &AgentId) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| &a.id == id)
    }

    pub fn contains(&self, id: &AgentId) -> bool {
        self.get(id).is_some()
    }

    pub fn position(&self, id: &AgentId) -> Option<usize> {
        self.agents.iter().position(|a| &a.id == id)
    }

    /// Looks an agent up by id first, then by a unique display name.
    pub fn resolve(&self, key: &str) -> Option<&AgentProfile> {
        let key = key.trim();
        if let Some(a) = self.agents.iter().find(|a| a.id.as_str() == key) {
            return Some(a);
        }
        let mut by_name = self
            .agents
            .iter()
            .filter(|a| a.name.trim().eq_ignore_ascii_case(key));
        match (by_name.next(), by_name.next()) {
            (Some(a), None) => Some(a),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionType {
    Propose,
    Critique,
    Improve,
    Finalize,
}

impl InteractionType {
    pub const ALL: [InteractionType; 4] = [
        InteractionType::Propose,
        InteractionType::Critique,
        InteractionType::Improve,
        InteractionType::Finalize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionType::Propose => "propose",
            InteractionType::Critique => "critique",
            InteractionType::Improve => "improve",
            InteractionType::Finalize => "finalize",
        }
    }
}

/// A declared dependency of an action: a key object among the task inputs,
/// or the result of an earlier action of the same task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InputRef {
    KeyObject(ObjectId),
    Action(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionSpec {
    pub agent_id: AgentId,
    pub instruction: String,
    pub interaction_type: InteractionType,
    #[serde(default)]
    pub important_inputs: Vec<InputRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSpec {
    pub id: TaskId,
    pub step_name: String,
    pub task_content: String,
    #[serde(default)]
    pub input_object_ids: Vec<ObjectId>,
    pub output_object_id: ObjectId,
    #[serde(default)]
    pub team: Vec<AgentId>,
    #[serde(default)]
    pub process: Vec<ActionSpec>,
}

impl TaskSpec {
    /// Index of the trailing Finalize action, if the process has one.
    pub fn finalize_index(&self) -> Option<usize> {
        match self.process.last() {
            Some(a) if a.interaction_type == InteractionType::Finalize => {
                Some(self.process.len() - 1)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Strategy {
    pub goal: Goal,
    #[serde(default)]
    pub key_objects: Vec<KeyObject>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub agent_board: AgentBoard,
}

impl Strategy {
    pub fn new(goal: Goal, initial_objects: Vec<KeyObject>, board: AgentBoard) -> Self {
        Self {
            goal,
            key_objects: initial_objects,
            tasks: Vec::new(),
            agent_board: board,
        }
    }

    pub fn object(&self, id: &ObjectId) -> Option<&KeyObject> {
        self.key_objects.iter().find(|o| &o.id == id)
    }

    pub fn object_mut(&mut self, id: &ObjectId) -> Option<&mut KeyObject> {
        self.key_objects.iter_mut().find(|o| &o.id == id)
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| &t.id == id)
    }

    pub fn task_index(&self, id: &TaskId) -> Option<usize> {
        self.tasks.iter().position(|t| &t.id == id)
    }

    pub fn task_mut(&mut self, id: &TaskId) -> Option<&mut TaskSpec> {
        self.tasks.iter_mut().find(|t| &t.id == id)
    }

    /// Index of the task producing `object`, if any.
    pub fn producer_index(&self, object: &ObjectId) -> Option<usize> {
        self.tasks
            .iter()
            .position(|t| &t.output_object_id == object)
    }

    pub fn initial_objects(&self) -> impl Iterator<Item = &KeyObject> {
        self.key_objects.iter().filter(|o| o.is_initial())
    }

    /// Looks an object up by id, then by case-insensitive unique name.
    pub fn resolve_object(&self, key: &str) -> Option<&KeyObject> {
        let key = key.trim();
        if let Some(o) = self.key_objects.iter().find(|o| o.id.as_str() == key) {
            return Some(o);
        }
        let mut by_name = self
            .key_objects
            .iter()
            .filter(|o| o.name.trim().eq_ignore_ascii_case(key));
        match (by_name.next(), by_name.next()) {
            (Some(o), None) => Some(o),
            _ => None,
        }
    }
}
