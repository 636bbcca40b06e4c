//! OpenAI-compatible chat-completions client (blocking) with retry and a
//! shared rate limiter.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::{debug, warn};

use super::{BackendError, FinishReason, GenRequest, GenResponse, Policy, RateLimiter};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const BASE_URL_ENV: &str = "OPENAI_BASE_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    pub context_limit: Option<usize>,
    pub seed: Option<u64>,
}

impl OpenAiConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.into(),
            model: model.into(),
            timeout: Duration::from_secs(120),
            max_retries: 5,
            backoff_base: Duration::from_millis(500),
            backoff_cap: Duration::from_secs(30),
            context_limit: None,
            seed: None,
        }
    }
}

pub struct OpenAiPolicy {
    id: String,
    config: OpenAiConfig,
    api_key: String,
    client: Client,
    limiter: Arc<RateLimiter>,
}

impl std::fmt::Debug for OpenAiPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiPolicy")
            .field("id", &self.id)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(GenResponse),
    Retry(String, Option<Duration>),
}

impl OpenAiPolicy {
    pub fn new(
        id: impl Into<String>,
        mut config: OpenAiConfig,
        api_key: impl Into<String>,
        limiter: Arc<RateLimiter>,
    ) -> Result<Self, BackendError> {
        config.base_url = config.base_url.trim_end_matches('/').to_string();
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            id: id.into(),
            config,
            api_key: api_key.into(),
            client,
            limiter,
        })
    }

    /// Reads the API key (and an optional base URL override) from the
    /// environment.
    pub fn from_env(
        id: impl Into<String>,
        mut config: OpenAiConfig,
        api_key_env: &str,
        limiter: Arc<RateLimiter>,
    ) -> Result<Self, BackendError> {
        let key = std::env::var(api_key_env)
            .map_err(|_| BackendError::Config(format!("environment variable {api_key_env} is not set")))?;
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            config.base_url = url;
        }
        Self::new(id, config, key, limiter)
    }

    fn body(&self, request: &GenRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system) = &request.system_text {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user_text}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.config
            .backoff_base
            .saturating_mul(factor)
            .min(self.config.backoff_cap)
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<Attempt, BackendError> {
        self.limiter.acquire();
        let url = format!("{}/chat/completions", self.config.base_url);
        let resp = match self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Ok(Attempt::Retry(e.to_string(), None))
            }
            Err(e) => return Err(BackendError::Protocol(e.to_string())),
        };
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let text = resp
            .text()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Ok(Attempt::Retry(format!("HTTP {}: {}", status.as_u16(), text), retry_after));
        }
        if !status.is_success() {
            let lower = text.to_lowercase();
            if lower.contains("context_length_exceeded") || lower.contains("maximum context length") {
                return Err(BackendError::ContextOverflow(text));
            }
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("{e}: {text}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("no choices in response".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("stop") | None => FinishReason::Stop,
            Some(_) => FinishReason::Stop,
        };
        let usage = parsed.usage.unwrap_or(Usage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(Attempt::Done(GenResponse {
            text: choice.message.content.unwrap_or_default(),
            tokens_in: usage.prompt_tokens,
            tokens_out: usage.completion_tokens,
            finish_reason,
        }))
    }
}

impl Policy for OpenAiPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenRequest) -> Result<GenResponse, BackendError> {
        request.validate()?;
        let body = self.body(request);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                debug!(attempt, "retrying chat completion");
            }
            match self.attempt(&body)? {
                Attempt::Done(resp) => return Ok(resp),
                Attempt::Retry(reason, retry_after) => {
                    warn!(attempt, %reason, "transient backend failure");
                    last = reason;
                    if attempt < self.config.max_retries {
                        let wait = retry_after
                            .unwrap_or_else(|| self.backoff(attempt))
                            .min(self.config.backoff_cap);
                        std::thread::sleep(wait);
                    }
                }
            }
        }
        Err(BackendError::RetriesExhausted {
            attempts: self.config.max_retries + 1,
            last,
        })
    }

    fn context_limit(&self) -> Option<usize> {
        self.config.context_limit
    }
}
