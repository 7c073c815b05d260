use super::{InputRef, ObjectId, Strategy, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A node of the dependency graph: a key object, or one action of a task.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NodeRef {
    Object(ObjectId),
    #[serde(rename_all = "camelCase")]
    Action {
        task_id: TaskId,
        index: usize,
    },
}

impl NodeRef {
    pub fn action(task_id: &TaskId, index: usize) -> Self {
        NodeRef::Action {
            task_id: task_id.clone(),
            index,
        }
    }

    /// Plan position of the node: `(task index, action index)` for actions,
    /// the producing Finalize position for task outputs, `None` for initial
    /// objects (they precede every task).
    pub fn position(&self, strategy: &Strategy) -> Option<(usize, usize)> {
        match self {
            NodeRef::Action { task_id, index } => strategy.task_index(task_id).map(|t| (t, *index)),
            NodeRef::Object(id) => strategy.producer_index(id).map(|t| {
                let len = strategy.tasks[t].process.len();
                (t, len.saturating_sub(1))
            }),
        }
    }
}

/// Text form: an object id, or `<task-id>#<action-index>` for actions.
impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Object(id) => write!(f, "{id}"),
            NodeRef::Action { task_id, index } => write!(f, "{task_id}#{index}"),
        }
    }
}

impl FromStr for NodeRef {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.rsplit_once('#') {
            Some((task, index)) => Ok(NodeRef::Action {
                task_id: TaskId::new(task),
                index: index.parse()?,
            }),
            None => Ok(NodeRef::Object(ObjectId::new(s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClosureError {
    #[error("unresolved reference '{0}'")]
    UnresolvedReference(NodeRef),
}

/// Static dependency edges `(input, consumer)` implied by the strategy:
/// every important input of every action, plus Finalize → task output.
/// A task without a process links its input objects to its output directly.
pub fn dependency_edges(strategy: &Strategy) -> Vec<(NodeRef, NodeRef)> {
    let mut edges = Vec::new();
    for task in &strategy.tasks {
        for (a, action) in task.process.iter().enumerate() {
            let consumer = NodeRef::action(&task.id, a);
            for input in &action.important_inputs {
                let source = match input {
                    InputRef::KeyObject(id) => NodeRef::Object(id.clone()),
                    InputRef::Action(k) => NodeRef::action(&task.id, *k),
                };
                edges.push((source, consumer.clone()));
            }
        }
        let output = NodeRef::Object(task.output_object_id.clone());
        match task.finalize_index() {
            Some(f) => edges.push((NodeRef::action(&task.id, f), output)),
            None if task.process.is_empty() => {
                for input in &task.input_object_ids {
                    edges.push((NodeRef::Object(input.clone()), output.clone()));
                }
            }
            None => {}
        }
    }
    edges
}

fn resolves(strategy: &Strategy, node: &NodeRef) -> bool {
    match node {
        NodeRef::Object(id) => strategy.object(id).is_some(),
        NodeRef::Action { task_id, index } => strategy
            .task(task_id)
            .is_some_and(|t| *index < t.process.len()),
    }
}

/// Everything `start` transitively depends on, `start` included.
pub fn dependency_closure(
    strategy: &Strategy,
    start: &NodeRef,
) -> Result<BTreeSet<NodeRef>, ClosureError> {
    if !resolves(strategy, start) {
        return Err(ClosureError::UnresolvedReference(start.clone()));
    }
    let mut predecessors: HashMap<NodeRef, Vec<NodeRef>> = HashMap::new();
    for (from, to) in dependency_edges(strategy) {
        predecessors.entry(to).or_default().push(from);
    }

    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start.clone()]);
    while let Some(node) = queue.pop_front() {
        if !seen.insert(node.clone()) {
            continue;
        }
        if let Some(preds) = predecessors.get(&node) {
            queue.extend(preds.iter().cloned());
        }
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn initial_object_closes_over_itself() {
        let s = fixtures::chain_strategy(3);
        let initial = s.initial_objects().next().unwrap().id.clone();
        let start = NodeRef::Object(initial);
        let closure = dependency_closure(&s, &start).unwrap();
        assert_eq!(closure, BTreeSet::from([start]));
    }

    #[test]
    fn unresolved_start_is_an_error() {
        let s = fixtures::chain_strategy(2);
        let missing = NodeRef::Object(ObjectId::new("nope"));
        assert_eq!(
            dependency_closure(&s, &missing),
            Err(ClosureError::UnresolvedReference(missing))
        );
        let bad_action = NodeRef::action(&s.tasks[0].id, 99);
        assert!(dependency_closure(&s, &bad_action).is_err());
    }

    #[test]
    fn node_ref_text_round_trip() {
        for text in ["obj-3", "task-2#4"] {
            let node: NodeRef = text.parse().unwrap();
            assert_eq!(node.to_string(), text);
        }
    }
}
