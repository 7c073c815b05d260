//! Output schemas for structured completions.
//!
//! Each schema is published as a JSON Schema document so fixture authors and
//! other frontends can validate model output independently. Inside this crate
//! the same shapes are enforced by typed deserialization plus the semantic
//! checks each generation stage layers on top.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaId {
    PlanOutline,
    AgentAssignment,
    TaskProcess,
    AspectDerivation,
    AgentScoring,
    Strategy,
}

impl SchemaId {
    pub const ALL: [SchemaId; 6] = [
        SchemaId::PlanOutline,
        SchemaId::AgentAssignment,
        SchemaId::TaskProcess,
        SchemaId::AspectDerivation,
        SchemaId::AgentScoring,
        SchemaId::Strategy,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            SchemaId::PlanOutline => "plan-outline",
            SchemaId::AgentAssignment => "agent-assignment",
            SchemaId::TaskProcess => "task-process",
            SchemaId::AspectDerivation => "aspect-derivation",
            SchemaId::AgentScoring => "agent-scoring",
            SchemaId::Strategy => "strategy",
        }
    }

    pub fn from_slug(slug: &str) -> Option<SchemaId> {
        SchemaId::ALL.into_iter().find(|s| s.slug() == slug)
    }

    /// The published JSON Schema document.
    pub fn document(self) -> &'static str {
        match self {
            SchemaId::PlanOutline => include_str!("../../schemas/plan-outline.schema.json"),
            SchemaId::AgentAssignment => include_str!("../../schemas/agent-assignment.schema.json"),
            SchemaId::TaskProcess => include_str!("../../schemas/task-process.schema.json"),
            SchemaId::AspectDerivation => {
                include_str!("../../schemas/aspect-derivation.schema.json")
            }
            SchemaId::AgentScoring => include_str!("../../schemas/agent-scoring.schema.json"),
            SchemaId::Strategy => include_str!("../../schemas/strategy.schema.json"),
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Pulls a JSON document out of raw model text: accepts bare JSON, fenced
/// code blocks, or JSON embedded in surrounding prose.
pub fn extract_json(raw: &str) -> Result<Value, String> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    if let Some(start) = trimmed.find("```") {
        let after = &trimmed[start + 3..];
        let after = after.strip_prefix("json").unwrap_or(after);
        if let Some(end) = after.find("```") {
            if let Ok(v) = serde_json::from_str(after[..end].trim()) {
                return Ok(v);
            }
        }
    }
    match (trimmed.find('{'), trimmed.rfind('}')) {
        (Some(s), Some(e)) if s < e => serde_json::from_str(&trimmed[s..=e])
            .map_err(|e| format!("response is not valid JSON: {e}")),
        _ => Err("response contains no JSON object".to_string()),
    }
}

/// Deserializes into the typed wire shape, reporting the failing path.
pub fn parse_shape<T: DeserializeOwned>(value: &Value) -> Result<T, Vec<String>> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        vec![format!("at {path}: {}", e.inner())]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_fenced_and_embedded_json() {
        assert_eq!(extract_json(r#"{"a":1}"#).unwrap()["a"], 1);
        assert_eq!(
            extract_json("Sure!\n```json\n{\"a\": 2}\n```\nDone.").unwrap()["a"],
            2
        );
        assert_eq!(extract_json("Here: {\"a\": 3} ok").unwrap()["a"], 3);
        assert!(extract_json("no json here").is_err());
        assert!(extract_json("{\"a\": ").is_err());
    }

    #[test]
    fn every_schema_document_parses() {
        for id in SchemaId::ALL {
            let doc: Value = serde_json::from_str(id.document()).unwrap();
            assert_eq!(doc["$id"], id.slug());
        }
    }

    #[test]
    fn parse_shape_reports_path() {
        #[derive(Deserialize, Debug)]
        struct Shape {
            #[allow(dead_code)]
            items: Vec<u8>,
        }
        let err = parse_shape::<Shape>(&serde_json::json!({"items": [1, "x"]})).unwrap_err();
        assert!(err[0].starts_with("at items[1]"), "{err:?}");
    }
}
