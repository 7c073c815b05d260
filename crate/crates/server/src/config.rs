//! Settings from an optional TOML file, overridden by `COORDKIT_*`
//! environment variables, overridden by command-line flags.

use crate::error::ApiError;
use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const DEFAULT_PORT: u16 = 8787;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model: "gpt-4o-mini".into(),
            timeout_secs: 120,
            max_concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    pub port: u16,
    /// `mock` or `remote`.
    pub provider: String,
    /// Scripted responses for the mock provider.
    pub fixtures: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Directory for projects created over the API.
    pub data_dir: PathBuf,
    pub remote: RemoteConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            provider: "mock".into(),
            fixtures: None,
            seed: None,
            data_dir: PathBuf::from("."),
            remote: RemoteConfig::default(),
        }
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ApiError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ApiError::new("io-error", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))
    }

    /// Loads `path` if given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ApiError> {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ApiError> {
        let parse = |key: &str, v: String| -> Result<u64, ApiError> {
            v.trim()
                .parse()
                .map_err(|_| ApiError::bad_request(format!("{key} must be a number, got '{v}'")))
        };
        if let Some(v) = var("COORDKIT_HOST") {
            self.host = v;
        }
        if let Some(v) = var("COORDKIT_PORT") {
            self.port = u16::try_from(parse("COORDKIT_PORT", v)?)
                .map_err(|_| ApiError::bad_request("COORDKIT_PORT is out of range"))?;
        }
        if let Some(v) = var("COORDKIT_PROVIDER") {
            self.provider = v;
        }
        if let Some(v) = var("COORDKIT_FIXTURES") {
            self.fixtures = Some(PathBuf::from(v));
        }
        if let Some(v) = var("COORDKIT_SEED") {
            self.seed = Some(parse("COORDKIT_SEED", v)?);
        }
        if let Some(v) = var("COORDKIT_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("COORDKIT_BASE_URL") {
            self.remote.base_url = v;
        }
        if let Some(v) = var("COORDKIT_API_KEY") {
            self.remote.api_key = Some(v);
        }
        if let Some(v) = var("COORDKIT_MODEL") {
            self.remote.model = v;
        }
        Ok(())
    }
}
