//! Browser bindings. Every export takes and returns JSON text so the page
//! needs no generated type glue beyond `wasm-bindgen`'s string passing.
//!
//! The logic lives in [`api`], which is plain Rust and tested natively; the
//! `#[wasm_bindgen]` wrappers only turn its errors into JS exceptions.

use wasm_bindgen::prelude::*;

pub mod api;

/// Validates a strategy and returns `{report, outline}`.
#[wasm_bindgen(js_name = validatePlan)]
pub fn validate_plan(strategy_json: &str) -> Result<String, JsError> {
    api::validate_plan(strategy_json).map_err(|e| JsError::new(&e))
}

/// Ranks a board against a score matrix; see [`api::RankInput`].
#[wasm_bindgen(js_name = rankAgents)]
pub fn rank_agents(input_json: &str) -> Result<String, JsError> {
    api::rank_agents(input_json).map_err(|e| JsError::new(&e))
}

/// Executes the strategy against the offline provider and traces `node`
/// (`obj-3` or `task-2#1`) back to its sources.
#[wasm_bindgen(js_name = traceNode)]
pub fn trace_node(strategy_json: &str, node: &str) -> Result<String, JsError> {
    api::trace_node(strategy_json, node).map_err(|e| JsError::new(&e))
}

/// Sample inputs for the page: `{strategy, ranking}`.
#[wasm_bindgen(js_name = samples)]
pub fn samples() -> String {
    api::samples()
}
