use chrono::DateTime;
use coordkit_core::explore;
use coordkit_core::fixtures;
use coordkit_core::gateway::{Gateway, MockProvider};
use coordkit_core::genesis::ScoreMatrix;
use coordkit_core::model::{validate_strategy, AgentId, NodeRef, Strategy};
use coordkit_core::runtime::{build_trace, execute, trace_back, ExecutionOptions};
use coordkit_core::versions::VersionId;
use coordkit_core::views::plan_outline;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;

/// Timestamps in the browser come from a fixed clock: the demo run is
/// deterministic and `wasm32-unknown-unknown` has no system time anyway.
const DEMO_EPOCH: i64 = 1_700_000_000;

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("view types serialize")
}

pub fn validate_plan(strategy_json: &str) -> Result<String, String> {
    let strategy: Strategy = parse("strategy", strategy_json)?;
    let report = validate_strategy(&strategy);
    Ok(to_json(&json!({
        "report": report,
        "outline": plan_outline(&strategy),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankInput {
    /// Agents in board order; ties keep this order.
    pub board: Vec<AgentId>,
    #[serde(default)]
    pub team: Vec<AgentId>,
    pub scores: ScoreMatrix,
    pub selected: Vec<String>,
}

pub fn rank_agents(input_json: &str) -> Result<String, String> {
    let input: RankInput = parse("ranking input", input_json)?;
    let ranked = explore::rank_agents(&input.board, &input.team, &input.scores, &input.selected)
        .map_err(|e| format!("{}: {e}", e.code()))?;
    Ok(to_json(&ranked))
}

pub fn trace_node(strategy_json: &str, node: &str) -> Result<String, String> {
    let strategy: Strategy = parse("strategy", strategy_json)?;
    let target: NodeRef = node
        .trim()
        .parse()
        .map_err(|e| format!("node '{node}': {e}"))?;
    let mut gateway = Gateway::new();
    gateway
        .register_provider("mock", Arc::new(MockProvider::new()))
        .map_err(|e| e.to_string())?;
    let at = DateTime::from_timestamp(DEMO_EPOCH, 0).expect("valid epoch");
    let options = ExecutionOptions::new("mock")
        .with_backoff(Duration::ZERO)
        .with_clock(move || at);
    let record = execute(
        &strategy,
        &VersionId("demo".into()),
        "run-demo",
        &gateway,
        &options,
        &mut |_| {},
    )
    .map_err(|e| format!("{}: {e}", e.code()))?;
    let graph = build_trace(&record, &strategy).map_err(|e| e.to_string())?;
    let predecessors = trace_back(&graph, &target).map_err(|e| format!("{}: {e}", e.code()))?;
    Ok(to_json(&json!({
        "node": target.to_string(),
        "predecessors": predecessors.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "nodes": graph.nodes.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "edges": graph.edges.iter().map(|e| [e.from.to_string(), e.to.to_string()]).collect::<Vec<_>>(),
        "status": record.status,
        "objectValues": record.object_values,
    })))
}

pub fn samples() -> String {
    let board = fixtures::novel_board();
    let selected = fixtures::theme_aspects_extended().selected();
    to_json(&json!({
        "strategy": fixtures::novel_strategy(),
        "ranking": {
            "board": board.agents.iter().map(|a| &a.id).collect::<Vec<_>>(),
            "team": ["agent-1", "agent-2"],
            "scores": fixtures::theme_score_matrix(),
            "selected": selected,
        },
        "names": board.agents.iter().map(|a| (a.id.to_string(), a.name.clone())).collect::<std::collections::BTreeMap<_, _>>(),
    }))
}
