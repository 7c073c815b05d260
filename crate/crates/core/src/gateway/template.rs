use super::schema::SchemaId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Pipeline stage a prompt belongs to. Also the key the mock provider uses to
/// pick scripted responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    PlanOutline,
    AgentAssignment,
    TaskProcess,
    AspectDerivation,
    AgentScoring,
    BranchCompletion,
    ActionExecution,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::PlanOutline,
        Stage::AgentAssignment,
        Stage::TaskProcess,
        Stage::AspectDerivation,
        Stage::AgentScoring,
        Stage::BranchCompletion,
        Stage::ActionExecution,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Stage::PlanOutline => "plan-outline",
            Stage::AgentAssignment => "agent-assignment",
            Stage::TaskProcess => "task-process",
            Stage::AspectDerivation => "aspect-derivation",
            Stage::AgentScoring => "agent-scoring",
            Stage::BranchCompletion => "branch-completion",
            Stage::ActionExecution => "action-execution",
        }
    }

    pub fn from_slug(slug: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.slug() == slug)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("placeholder '{{{0}}}' is used in the body but not declared")]
    UndeclaredPlaceholder(String),
    #[error("missing binding for placeholder '{0}'")]
    MissingBinding(String),
}

/// A prompt body with `{name}` placeholders. Only brace pairs enclosing a
/// plain identifier are placeholders; any other brace is literal text, so
/// JSON examples can sit in the body unescaped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: Stage,
    body: String,
    placeholders: Vec<String>,
    schema_id: Option<SchemaId>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_identifier(&after[..close]) => {
                if open > 0 {
                    out.push(Piece::Text(&rest[..open]));
                }
                out.push(Piece::Slot(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                out.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}

impl PromptTemplate {
    pub fn new(
        stage: Stage,
        body: impl Into<String>,
        placeholders: &[&str],
        schema_id: Option<SchemaId>,
    ) -> Result<Self, TemplateError> {
        let body = body.into();
        let declared: BTreeSet<&str> = placeholders.iter().copied().collect();
        for piece in pieces(&body) {
            if let Piece::Slot(name) = piece {
                if !declared.contains(name) {
                    return Err(TemplateError::UndeclaredPlaceholder(name.to_string()));
                }
            }
        }
        Ok(Self {
            stage,
            body,
            placeholders: placeholders.iter().map(|s| s.to_string()).collect(),
            schema_id,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &[String] {
        &self.placeholders
    }

    pub fn schema_id(&self) -> Option<SchemaId> {
        self.schema_id
    }

    /// Substitutes every placeholder in a single pass. Bound values are
    /// inserted verbatim and never re-scanned.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in pieces(&self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match bindings.get(name) {
                    Some(v) => out.push_str(v),
                    None => return Err(TemplateError::MissingBinding(name.to_string())),
                },
            }
        }
        Ok(out)
    }
}

/// Builds a binding map from `(name, value)` pairs.
pub fn bindings<K: Into<String>, V: Into<String>>(
    pairs: impl IntoIterator<Item = (K, V)>,
) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}
