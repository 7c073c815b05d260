use super::ExecutionRecord;
use crate::model::{InputRef, NodeRef, Strategy};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceEdge {
    pub from: NodeRef,
    pub to: NodeRef,
}

/// Observed dependencies of a run. Nodes are listed in the order they came
/// into existence: initial objects, then results and outputs as executed,
/// which is also a topological order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceGraph {
    pub nodes: Vec<NodeRef>,
    pub edges: Vec<TraceEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("node '{0}' is not part of the trace")]
    UnknownNode(NodeRef),
    #[error("record refers to task '{0}', which the strategy does not have")]
    RecordMismatch(String),
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::UnknownNode(_) => "unknown-node",
            TraceError::RecordMismatch(_) => "record-mismatch",
        }
    }
}

impl TraceGraph {
    pub fn contains(&self, node: &NodeRef) -> bool {
        self.nodes.contains(node)
    }

    pub fn edge_set(&self) -> BTreeSet<(NodeRef, NodeRef)> {
        self.edges
            .iter()
            .map(|e| (e.from.clone(), e.to.clone()))
            .collect()
    }

    fn push_node(&mut self, seen: &mut HashSet<NodeRef>, node: NodeRef) {
        if seen.insert(node.clone()) {
            self.nodes.push(node);
        }
    }
}

/// Builds the graph from what the run actually resolved: one edge per
/// resolved input, one per materialized task output.
pub fn build_trace(
    record: &ExecutionRecord,
    strategy: &Strategy,
) -> Result<TraceGraph, TraceError> {
    let mut graph = TraceGraph::default();
    let mut seen_nodes = HashSet::new();
    let mut seen_edges = HashSet::new();
    let mut add_edge = |graph: &mut TraceGraph, from: NodeRef, to: NodeRef| {
        let edge = TraceEdge { from, to };
        if seen_edges.insert(edge.clone()) {
            graph.edges.push(edge);
        }
    };

    for object in strategy.initial_objects() {
        graph.push_node(&mut seen_nodes, NodeRef::Object(object.id.clone()));
    }
    for result in &record.action_results {
        let task = strategy
            .task(&result.task_id)
            .ok_or_else(|| TraceError::RecordMismatch(result.task_id.to_string()))?;
        let node = NodeRef::action(&result.task_id, result.action_index);
        graph.push_node(&mut seen_nodes, node.clone());
        for r in &result.resolved_inputs {
            let from = match &r.input {
                InputRef::KeyObject(id) => NodeRef::Object(id.clone()),
                InputRef::Action(i) => NodeRef::action(&result.task_id, *i),
            };
            add_edge(&mut graph, from, node.clone());
        }
        if task.finalize_index() == Some(result.action_index)
            && record.object_values.contains_key(&task.output_object_id)
        {
            let output = NodeRef::Object(task.output_object_id.clone());
            graph.push_node(&mut seen_nodes, output.clone());
            add_edge(&mut graph, node, output);
        }
    }
    Ok(graph)
}

/// Every transitive predecessor of `node`, in topological order (sources
/// first; ties in graph node order).
pub fn trace_back(graph: &TraceGraph, node: &NodeRef) -> Result<Vec<NodeRef>, TraceError> {
    if !graph.contains(node) {
        return Err(TraceError::UnknownNode(node.clone()));
    }
    let mut preds: HashMap<&NodeRef, Vec<&NodeRef>> = HashMap::new();
    for e in &graph.edges {
        preds.entry(&e.to).or_default().push(&e.from);
    }
    let mut ancestors: HashSet<&NodeRef> = HashSet::new();
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        for p in preds.get(n).into_iter().flatten() {
            if ancestors.insert(p) {
                stack.push(p);
            }
        }
    }

    // Kahn's algorithm over the ancestor subgraph, picking the earliest
    // ready node each round.
    let order: HashMap<&NodeRef, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n, i))
        .collect();
    let mut indegree: HashMap<&NodeRef, usize> = ancestors.iter().map(|n| (*n, 0)).collect();
    let mut succs: HashMap<&NodeRef, Vec<&NodeRef>> = HashMap::new();
    for e in &graph.edges {
        if ancestors.contains(&e.from) && ancestors.contains(&e.to) {
            *indegree.get_mut(&e.to).expect("ancestor") += 1;
            succs.entry(&e.from).or_default().push(&e.to);
        }
    }
    let rank = |n: &NodeRef| order.get(n).copied().unwrap_or(usize::MAX);
    let mut ready: BTreeSet<(usize, &NodeRef)> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| (rank(n), *n))
        .collect();
    let mut out = Vec::with_capacity(ancestors.len());
    while let Some(first) = ready.iter().next().copied() {
        ready.remove(&first);
        let n = first.1;
        out.push(n.clone());
        for s in succs.get(n).into_iter().flatten() {
            let d = indegree.get_mut(s).expect("ancestor");
            *d -= 1;
            if *d == 0 {
                ready.insert((rank(s), *s));
            }
        }
    }
    Ok(out)
}
