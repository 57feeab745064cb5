//! Inference-time paraphrases: cache-first lookup with an optional HTTP
//! completion endpoint behind it.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::http::post_json_with_retries;
use crate::error::{Error, Result};

/// Few-shot prompt for declarative restatement of an utterance; `{}` is
/// replaced by the utterance text.
pub const PARAPHRASE_PROMPT_TEMPLATE: &str = "Given an utterance, describe what the user is asking.\n\nsentence: \"set an alarm for every weekday at 7 am\"\ndescription: user is asking to set an alarm for every weekday at 7am\n\nsentence: \"can you show me the step-by-step instructions to bake chocolate chip cookies\"\ndescription: user is asking for recipe for chocolate chip cookies\n\nsentence: \"could you please tell me what time it is now\"\ndescription: user is asking for the current time\n\nsentence: \"{}\"\ndescription:";

#[derive(Serialize, Deserialize)]
struct ParaphraseRecord {
    id: String,
    paraphrase: String,
}

/// Loads a paraphrase cache file: JSONL of {"id", "paraphrase"}.
pub fn load_paraphrase_cache(path: &Path) -> Result<HashMap<String, String>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut cache = HashMap::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ParaphraseRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: display.clone(),
            line: line_no + 1,
            message: format!("malformed paraphrase record: {e}"),
        })?;
        cache.insert(record.id, record.paraphrase);
    }
    Ok(cache)
}

/// Configuration for the HTTP completion endpoint used to generate
/// paraphrases. The request goes to `{base_url}/completions`.
#[derive(Debug, Clone)]
pub struct CompletionConfig {
    pub base_url: String,
    pub model: String,
    pub max_tokens: usize,
    pub temperature: f64,
    pub auth_env: Option<String>,
    pub timeout: Duration,
    pub max_retries: usize,
    pub prompt_template: String,
}

impl CompletionConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        CompletionConfig {
            base_url: base_url.into(),
            model: model.into(),
            max_tokens: 64,
            temperature: 0.0,
            auth_env: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            prompt_template: PARAPHRASE_PROMPT_TEMPLATE.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

pub struct HttpCompletionProvider {
    agent: ureq::Agent,
    config: CompletionConfig,
    bearer: Option<String>,
}

impl HttpCompletionProvider {
    pub fn new(config: CompletionConfig) -> Result<Self> {
        let bearer = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::InvalidInput(format!("bearer-token env var {var:?} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(HttpCompletionProvider {
            agent,
            config,
            bearer,
        })
    }

    /// Generates one completion for the utterance via the prompt template.
    pub fn complete(&self, utterance: &str) -> Result<String> {
        let prompt = self
            .config
            .prompt_template
            .replacen("{}", utterance, 1);
        let body = serde_json::json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        });
        let url = format!(
            "{}/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let raw = post_json_with_retries(
            &self.agent,
            &url,
            self.bearer.as_deref(),
            &body,
            self.config.max_retries,
        )?;
        let response: CompletionResponse = serde_json::from_value(raw)
            .map_err(|e| Error::Provider(format!("unexpected completion response shape: {e}")))?;
        response
            .choices
            .first()
            .map(|c| c.text.clone())
            .ok_or_else(|| Error::Provider("completion response has no choices".into()))
    }
}

/// First non-empty line of a completion, trimmed.
pub fn first_non_empty_line(text: &str) -> Option<String> {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

/// Paraphrase lookup: cache first, live endpoint on misses when
/// configured. Failures never abort a run; they are counted and the
/// component simply contributes nothing.
pub struct ParaphraseSource {
    cache: HashMap<String, String>,
    provider: Option<HttpCompletionProvider>,
    failures: AtomicUsize,
}

impl ParaphraseSource {
    pub fn new(cache: HashMap<String, String>, provider: Option<HttpCompletionProvider>) -> Self {
        ParaphraseSource {
            cache,
            provider,
            failures: AtomicUsize::new(0),
        }
    }

    pub fn cache_only(cache: HashMap<String, String>) -> Self {
        ParaphraseSource::new(cache, None)
    }

    pub fn empty() -> Self {
        ParaphraseSource::new(HashMap::new(), None)
    }

    /// Exactly one paraphrase per utterance, or none in degraded mode.
    pub fn paraphrase(&self, id: &str, text: &str) -> Option<String> {
        if let Some(cached) = self.cache.get(id) {
            return Some(cached.clone());
        }
        let provider = self.provider.as_ref()?;
        match provider.complete(text) {
            Ok(raw) => first_non_empty_line(&raw),
            Err(_) => {
                self.failures.fetch_add(1, Ordering::SeqCst);
                None
            }
        }
    }

    /// Number of live-provider failures observed so far.
    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::SeqCst)
    }
}
