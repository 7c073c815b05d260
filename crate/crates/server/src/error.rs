//! The error envelope shared by the HTTP API and the CLI.

use coordkit_core::explore::ExploreError;
use coordkit_core::gateway::GatewayError;
use coordkit_core::genesis::GenesisError;
use coordkit_core::model::ValidationReport;
use coordkit_core::runtime::{RuntimeError, TraceError};
use coordkit_core::workspace::WorkspaceError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;

/// Every code an [`ApiError`] can carry, with its HTTP status.
pub const ERROR_CODES: &[(&str, u16)] = &[
    ("bad-request", 400),
    ("validation-failed", 422),
    ("not-executable", 422),
    ("schema-violation", 422),
    ("invalid-payload", 422),
    ("corrupt-file", 422),
    ("empty-goal", 422),
    ("empty-board", 422),
    ("empty-team", 422),
    ("empty-team-forbidden", 422),
    ("empty-requirement", 422),
    ("empty-aspect", 422),
    ("duplicate-aspect", 422),
    ("no-aspects", 422),
    ("no-scores", 422),
    ("invalid-branch-point", 422),
    ("invalid-branch-count", 422),
    ("wrong-session-kind", 422),
    ("unmaterialized-input", 422),
    ("not-found", 404),
    ("unknown-project", 404),
    ("unknown-task", 404),
    ("unknown-agent", 404),
    ("unknown-aspect", 404),
    ("unknown-node", 404),
    ("unknown-session", 404),
    ("unknown-run", 404),
    ("unknown-job", 404),
    ("unknown-schema", 404),
    ("missing-version", 500),
    ("forest-violation", 500),
    ("record-mismatch", 500),
    ("broken-log", 500),
    ("project-exists", 409),
    ("run-in-progress", 409),
    ("generation-failed", 502),
    ("schema-violation-after-repairs", 502),
    ("provider-failed", 502),
    ("provider-unavailable", 503),
    ("invalid-result", 502),
    ("missing-binding", 500),
    ("invalid-template", 500),
    ("duplicate-provider", 500),
    ("io-error", 500),
    ("internal", 500),
];

pub fn status_for(code: &str) -> u16 {
    ERROR_CODES
        .iter()
        .find(|(c, _)| *c == code)
        .map_or(500, |(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Structured context, e.g. the full validation report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        debug_assert!(
            ERROR_CODES.iter().any(|(c, _)| *c == code),
            "unpublished error code {code}"
        );
        Self {
            code: code.to_string(),
            message: message.into(),
            path: None,
            details: None,
        }
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("bad-request", message)
    }

    pub fn validation(report: &ValidationReport) -> Self {
        let first = report.errors.first();
        let mut e = Self::new(
            "validation-failed",
            format!("strategy has {} validation error(s)", report.errors.len()),
        )
        .with_details(serde_json::to_value(report).unwrap_or(Value::Null));
        if let Some(issue) = first {
            e = e.at(issue.path.clone());
        }
        e
    }

    pub fn status(&self) -> u16 {
        status_for(&self.code)
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)?;
        if let Some(p) = &self.path {
            write!(f, " (at {p})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

fn gateway_details(e: &GatewayError) -> Option<Value> {
    match e {
        GatewayError::SchemaViolationAfterRepairs {
            errors, repairs, ..
        } => Some(serde_json::json!({ "repairs": repairs, "errors": errors })),
        _ => None,
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let mut api = ApiError::new(e.code(), e.to_string());
        api.details = gateway_details(&e);
        api
    }
}

impl From<GenesisError> for ApiError {
    fn from(e: GenesisError) -> Self {
        match &e {
            GenesisError::Generation { source, .. } => ApiError::new(e.code(), e.to_string())
                .with_details(serde_json::json!({
                    "cause": source.code(),
                    "details": gateway_details(source),
                })),
            GenesisError::InvalidResult(issues) => ApiError::new(e.code(), e.to_string())
                .with_details(serde_json::to_value(issues).unwrap_or(Value::Null)),
            _ => ApiError::new(e.code(), e.to_string()),
        }
    }
}

impl From<ExploreError> for ApiError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::Genesis(g) => g.into(),
            other => ApiError::new(other.code(), other.to_string()),
        }
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        match &e {
            RuntimeError::InvalidStrategy(report) => ApiError::validation(report),
            _ => ApiError::new(e.code(), e.to_string()),
        }
    }
}

impl From<TraceError> for ApiError {
    fn from(e: TraceError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        let mut api = ApiError::new(e.code(), e.to_string());
        match &e {
            WorkspaceError::CorruptFile { path, .. } => api = api.at(path.clone()),
            WorkspaceError::SchemaViolation(list) => {
                api = api.with_details(serde_json::json!({ "violations": list }))
            }
            _ => {}
        }
        api
    }
}
