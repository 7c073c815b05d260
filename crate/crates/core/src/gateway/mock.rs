use super::{Provider, ProviderCall, ProviderError, Stage};
use crate::canonical::hex_sha256;
use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::{Arc, Mutex};

type Responder =
    dyn Fn(&ProviderCall, usize) -> Option<Result<String, ProviderError>> + Send + Sync;

/// Deterministic offline provider.
///
/// Responses are scripted per stage and handed out by call ordinal: the n-th
/// call for a stage (repair calls included) receives script entry n. Calls
/// without a script entry go to the optional responder; action-execution
/// calls fall back to a digest of seed and prompt; anything else fails.
#[derive(Clone, Default)]
pub struct MockProvider {
    scripted: HashMap<(Stage, usize), String>,
    counters: Arc<Mutex<HashMap<Stage, usize>>>,
    responder: Option<Arc<Responder>>,
    seed: u64,
}

impl std::fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockProvider")
            .field("scripted", &self.scripted.len())
            .field("seed", &self.seed)
            .finish()
    }
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Appends a scripted response after the last one scripted for `stage`.
    pub fn with_response(mut self, stage: Stage, text: impl Into<String>) -> Self {
        let next = self
            .scripted
            .keys()
            .filter(|(s, _)| *s == stage)
            .map(|(_, n)| n + 1)
            .max()
            .unwrap_or(0);
        self.scripted.insert((stage, next), text.into());
        self
    }

    pub fn with_responder(
        mut self,
        f: impl Fn(&ProviderCall, usize) -> Option<Result<String, ProviderError>>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    /// Loads `<stage-slug>-<ordinal>.<ext>` files, e.g. `plan-outline-000.json`.
    /// Other files are ignored.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut mock = Self::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if !path.is_file() {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let Some((slug, ordinal)) = stem.rsplit_once('-') else {
                continue;
            };
            let (Some(stage), Ok(ordinal)) = (Stage::from_slug(slug), ordinal.parse::<usize>())
            else {
                continue;
            };
            mock.scripted
                .insert((stage, ordinal), fs::read_to_string(&path)?);
        }
        Ok(mock)
    }

    pub fn calls(&self, stage: Stage) -> usize {
        self.counters
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&stage)
            .copied()
            .unwrap_or(0)
    }

    pub fn scripted_count(&self, stage: Stage) -> usize {
        self.scripted.keys().filter(|(s, _)| *s == stage).count()
    }

    fn next_ordinal(&self, stage: Stage) -> usize {
        let mut counters = self.counters.lock().unwrap_or_else(|e| e.into_inner());
        let n = counters.entry(stage).or_insert(0);
        let ordinal = *n;
        *n += 1;
        ordinal
    }

    /// Text returned for unscripted action-execution calls.
    pub fn echo(seed: u64, prompt: &str) -> String {
        let mut bytes = seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(prompt.as_bytes());
        let digest = hex_sha256(&bytes);
        format!("Mock result {}.", &digest[..16])
    }
}

impl Provider for MockProvider {
    fn complete(&self, call: &ProviderCall) -> Result<String, ProviderError> {
        let ordinal = self.next_ordinal(call.stage);
        if let Some(text) = self.scripted.get(&(call.stage, ordinal)) {
            return Ok(text.clone());
        }
        if let Some(responder) = &self.responder {
            if let Some(result) = responder(call, ordinal) {
                return result;
            }
        }
        if call.stage == Stage::ActionExecution {
            return Ok(Self::echo(call.seed.unwrap_or(self.seed), &call.prompt));
        }
        Err(ProviderError::Unavailable(format!(
            "mock has no scripted response for {} #{ordinal}",
            call.stage
        )))
    }
}
