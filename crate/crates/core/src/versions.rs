//! Content-addressed, immutable payload versions shared by the working
//! strategy, exploration sessions and execution records.

use crate::canonical::content_hash;
use crate::model::{ActionSpec, AgentId, Strategy, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// SHA-256 (hex) of the payload's canonical JSON.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionId(pub String);

impl VersionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Payload {
    Strategy {
        strategy: Strategy,
    },
    #[serde(rename_all = "camelCase")]
    Process {
        task_id: TaskId,
        actions: Vec<ActionSpec>,
    },
    #[serde(rename_all = "camelCase")]
    Team {
        task_id: TaskId,
        team: Vec<AgentId>,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Strategy { .. } => "strategy",
            Payload::Process { .. } => "process",
            Payload::Team { .. } => "team",
        }
    }

    pub fn as_strategy(&self) -> Option<&Strategy> {
        match self {
            Payload::Strategy { strategy } => Some(strategy),
            _ => None,
        }
    }

    pub fn id(&self) -> VersionId {
        VersionId(content_hash(self).expect("payloads always serialize"))
    }
}

/// Identical payloads share one entry: the key is the hash of the value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionStore {
    blobs: BTreeMap<VersionId, Payload>,
}

impl VersionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, payload: Payload) -> VersionId {
        let id = payload.id();
        self.blobs.entry(id.clone()).or_insert(payload);
        id
    }

    pub fn put_strategy(&mut self, strategy: Strategy) -> VersionId {
        self.put(Payload::Strategy { strategy })
    }

    pub fn get(&self, id: &VersionId) -> Option<&Payload> {
        self.blobs.get(id)
    }

    pub fn strategy(&self, id: &VersionId) -> Option<&Strategy> {
        self.get(id).and_then(Payload::as_strategy)
    }

    pub fn contains(&self, id: &VersionId) -> bool {
        self.blobs.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VersionId, &Payload)> {
        self.blobs.iter()
    }

    /// Ids whose key no longer matches the hash of their payload.
    pub fn mismatched(&self) -> Vec<VersionId> {
        self.blobs
            .iter()
            .filter(|(id, p)| &p.id() != *id)
            .map(|(id, _)| id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identical_payloads_share_a_blob() {
        let mut store = VersionStore::new();
        let a = store.put_strategy(fixtures::novel_strategy());
        let b = store.put_strategy(fixtures::novel_strategy());
        assert_eq!(a, b);
        assert_eq!(store.len(), 1);
        let c = store.put_strategy(fixtures::novel_strategy_merged_ending());
        assert_ne!(a, c);
        assert_eq!(store.len(), 2);
        assert!(store.mismatched().is_empty());
    }

    #[test]
    fn payload_wire_format() {
        let p = Payload::Team {
            task_id: TaskId::new("task-1"),
            team: vec![AgentId::new("agent-1")],
        };
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"kind": "team", "taskId": "task-1", "team": ["agent-1"]})
        );
    }
}
