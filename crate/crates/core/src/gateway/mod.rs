//! One completion interface over interchangeable LLM providers.
//!
//! Structured completions are parsed and checked locally; an output that
//! fails its check is sent back to the model with the problems listed, up to
//! `repair_limit` times. A request therefore makes at most
//! `repair_limit + 1` provider calls.

mod mock;
pub mod schema;
mod template;

pub use mock::MockProvider;
pub use schema::{extract_json, parse_shape, SchemaId};
pub use template::{bindings, PromptTemplate, Stage, TemplateError};

use serde_json::Value;
use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

pub const DEFAULT_REPAIR_LIMIT: u32 = 2;
pub const GENERATION_TEMPERATURE: f32 = 0.7;
pub const SCORING_TEMPERATURE: f32 = 0.2;

/// One call as seen by a provider adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderCall {
    pub stage: Stage,
    pub prompt: String,
    pub temperature: f32,
    pub seed: Option<u64>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider timed out after {0:?}")]
    Timeout(Duration),
    #[error("provider error: {0}")]
    Failed(String),
}

/// A text-completion backend. Adapters must tolerate concurrent calls.
pub trait Provider: Send + Sync {
    fn complete(&self, call: &ProviderCall) -> Result<String, ProviderError>;
}

impl<F> Provider for F
where
    F: Fn(&ProviderCall) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, call: &ProviderCall) -> Result<String, ProviderError> {
        self(call)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProviderSettings {
    pub max_concurrency: usize,
    pub timeout: Duration,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            max_concurrency: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("duplicate provider '{0}'")]
    DuplicateProvider(String),
    #[error("provider '{0}' is not registered")]
    ProviderUnavailable(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("output still violates its schema after {repairs} repair attempts: {}", errors.join("; "))]
    SchemaViolationAfterRepairs {
        repairs: u32,
        raw: String,
        errors: Vec<String>,
    },
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::DuplicateProvider(_) => "duplicate-provider",
            GatewayError::ProviderUnavailable(_) => "provider-unavailable",
            GatewayError::Template(TemplateError::MissingBinding(_)) => "missing-binding",
            GatewayError::Template(_) => "invalid-template",
            GatewayError::Provider(_) => "provider-failed",
            GatewayError::SchemaViolationAfterRepairs { .. } => "schema-violation-after-repairs",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub template: PromptTemplate,
    pub bindings: BTreeMap<String, String>,
    pub provider: String,
    pub temperature: f32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredResult<T> {
    pub value: T,
    /// The parsed JSON document the value was built from.
    pub document: Value,
    /// Verbatim text of the accepted response.
    pub raw: String,
    pub repair_attempts: u32,
}

struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.released.notify_one();
    }
}

struct Registered {
    adapter: Arc<dyn Provider>,
    settings: ProviderSettings,
    permits: Permits,
}

/// Provider registry plus the structured-completion loop. Register every
/// provider at startup, then share the gateway behind an `Arc`.
pub struct Gateway {
    providers: BTreeMap<String, Registered>,
    repair_limit: u32,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self {
            providers: BTreeMap::new(),
            repair_limit: DEFAULT_REPAIR_LIMIT,
        }
    }

    pub fn with_repair_limit(mut self, limit: u32) -> Self {
        self.repair_limit = limit;
        self
    }

    pub fn repair_limit(&self) -> u32 {
        self.repair_limit
    }

    pub fn register_provider(
        &mut self,
        id: impl Into<String>,
        adapter: Arc<dyn Provider>,
    ) -> Result<(), GatewayError> {
        self.register_provider_with(id, adapter, ProviderSettings::default())
    }

    pub fn register_provider_with(
        &mut self,
        id: impl Into<String>,
        adapter: Arc<dyn Provider>,
        settings: ProviderSettings,
    ) -> Result<(), GatewayError> {
        let id = id.into();
        if self.providers.contains_key(&id) {
            return Err(GatewayError::DuplicateProvider(id));
        }
        self.providers.insert(
            id,
            Registered {
                adapter,
                permits: Permits::new(settings.max_concurrency),
                settings,
            },
        );
        Ok(())
    }

    pub fn provider_ids(&self) -> impl Iterator<Item = &str> {
        self.providers.keys().map(String::as_str)
    }

    pub fn has_provider(&self, id: &str) -> bool {
        self.providers.contains_key(id)
    }

    fn call(
        &self,
        provider: &str,
        stage: Stage,
        prompt: String,
        temperature: f32,
        seed: Option<u64>,
    ) -> Result<String, GatewayError> {
        let entry = self
            .providers
            .get(provider)
            .ok_or_else(|| GatewayError::ProviderUnavailable(provider.to_string()))?;
        let call = ProviderCall {
            stage,
            prompt,
            temperature,
            seed,
            timeout: entry.settings.timeout,
        };
        let _permit = entry.permits.acquire();
        Ok(entry.adapter.complete(&call)?)
    }

    /// Plain text completion, no schema.
    pub fn complete_text(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let prompt = request.template.render(&request.bindings)?;
        self.call(
            &request.provider,
            request.template.stage(),
            prompt,
            request.temperature,
            request.seed,
        )
    }

    /// Completes, parses and checks a structured response, repairing on
    /// failure. `check` turns a parsed document into the typed value or
    /// explains what is wrong with it.
    pub fn complete_structured<T>(
        &self,
        request: &CompletionRequest,
        check: impl Fn(&Value) -> Result<T, Vec<String>>,
    ) -> Result<StructuredResult<T>, GatewayError> {
        let prompt = request.template.render(&request.bindings)?;
        let stage = request.template.stage();
        let mut raw = self.call(
            &request.provider,
            stage,
            prompt.clone(),
            request.temperature,
            request.seed,
        )?;
        let mut attempt = 0;
        loop {
            let outcome = extract_json(&raw)
                .map_err(|e| vec![e])
                .and_then(|doc| check(&doc).map(|value| (value, doc)));
            match outcome {
                Ok((value, document)) => {
                    return Ok(StructuredResult {
                        value,
                        document,
                        raw,
                        repair_attempts: attempt,
                    })
                }
                Err(errors) if attempt >= self.repair_limit => {
                    return Err(GatewayError::SchemaViolationAfterRepairs {
                        repairs: attempt,
                        raw,
                        errors,
                    })
                }
                Err(errors) => {
                    attempt += 1;
                    let repair =
                        repair_prompt(&prompt, &raw, &errors, request.template.schema_id());
                    raw = self.call(
                        &request.provider,
                        stage,
                        repair,
                        request.temperature,
                        request.seed,
                    )?;
                }
            }
        }
    }
}

fn repair_prompt(original: &str, raw: &str, errors: &[String], schema: Option<SchemaId>) -> String {
    let mut out = String::from(original);
    out.push_str("\n\n---\nYour previous response could not be accepted.\n\nPrevious response:\n");
    out.push_str(raw);
    out.push_str("\n\nProblems found:\n");
    for e in errors {
        out.push_str("- ");
        out.push_str(e);
        out.push('\n');
    }
    if let Some(schema) = schema {
        out.push_str("\nThe response must conform to this JSON Schema:\n");
        out.push_str(schema.document());
    }
    out.push_str("\nReply again with only the corrected JSON document.\n");
    out
}
