//! Provider wiring: the offline mock and an adapter for OpenAI-compatible
//! chat-completion endpoints.

use crate::config::{Config, RemoteConfig};
use crate::error::ApiError;
use coordkit_core::fixtures;
use coordkit_core::gateway::{
    Gateway, MockProvider, Provider, ProviderCall, ProviderError, ProviderSettings,
};
use serde_json::{json, Value};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

/// Blocking HTTP adapter. Call it from a blocking context (a plain thread
/// or `spawn_blocking`), never directly on an async executor.
pub struct RemoteProvider {
    config: RemoteConfig,
    client: OnceLock<reqwest::blocking::Client>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Self {
        Self {
            config,
            client: OnceLock::new(),
        }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(reqwest::blocking::Client::new)
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

impl Provider for RemoteProvider {
    fn complete(&self, call: &ProviderCall) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": call.prompt }],
            "temperature": call.temperature,
        });
        if let Some(seed) = call.seed {
            body["seed"] = json!(seed);
        }
        let mut request = self
            .client()
            .post(self.endpoint())
            .timeout(call.timeout)
            .json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(call.timeout)
            } else {
                ProviderError::Unavailable(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::Failed(format!("reading response: {e}")))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(300).collect();
            return Err(ProviderError::Failed(format!("HTTP {status}: {snippet}")));
        }
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Failed(format!("response is not JSON: {e}")))?;
        doc.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::Failed("response has no choices[0].message.content".into())
            })
    }
}

/// Registers the mock provider (always) and the remote one when
/// configured; returns the gateway and the id of the selected provider.
pub fn build_gateway(config: &Config) -> Result<(Arc<Gateway>, String), ApiError> {
    let mut gateway = Gateway::new();
    let dir = config
        .fixtures
        .clone()
        .unwrap_or_else(fixtures::novel_fixture_dir);
    let mock = MockProvider::from_dir(&dir)
        .map_err(|e| ApiError::new("io-error", format!("fixtures {}: {e}", dir.display())))?
        .with_seed(config.seed.unwrap_or(0));
    gateway.register_provider("mock", Arc::new(mock))?;
    match config.provider.as_str() {
        "mock" => {}
        "remote" => {
            let settings = ProviderSettings {
                max_concurrency: config.remote.max_concurrency.max(1),
                timeout: Duration::from_secs(config.remote.timeout_secs.max(1)),
            };
            gateway.register_provider_with(
                "remote",
                Arc::new(RemoteProvider::new(config.remote.clone())),
                settings,
            )?;
        }
        other => {
            return Err(ApiError::new(
                "provider-unavailable",
                format!("unknown provider '{other}' (mock or remote)"),
            ))
        }
    }
    Ok((Arc::new(gateway), config.provider.clone()))
}
