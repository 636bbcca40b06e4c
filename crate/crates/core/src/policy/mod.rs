//! Text-generation backends. Every model call in the harness, policy or
//! judge, goes through [`Policy::generate`].

mod openai;
mod rate_limit;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use openai::{OpenAiConfig, OpenAiPolicy, BASE_URL_ENV, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL};
pub use rate_limit::RateLimiter;
pub use scripted::{
    PromptPredicate, Script, ScriptCursor, ScriptEntry, ScriptError, ScriptRule, ScriptedPolicy,
    SequenceStep,
};

pub const DEFAULT_POLICY_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_JUDGE_TEMPERATURE: f64 = 0.0;

/// Who is asking. Scripted backends key their canned responses on this;
/// it never reaches the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CallRole {
    #[default]
    Policy,
    Judge,
    Feedback,
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CallTag {
    pub problem_id: String,
    pub episode: u32,
    pub role: CallRole,
}

impl CallTag {
    pub fn new(problem_id: impl Into<String>, episode: u32, role: CallRole) -> Self {
        Self {
            problem_id: problem_id.into(),
            episode,
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub system_text: Option<String>,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub stop_sequences: Vec<String>,
    pub backend_id: String,
    pub tag: CallTag,
}

impl GenRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.user_text.is_empty() {
            return Err(BackendError::InvalidRequest("empty user text".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenResponse {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub finish_reason: FinishReason,
}

/// Sampling settings shared by every call of one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl GenSettings {
    pub fn policy() -> Self {
        Self {
            temperature: DEFAULT_POLICY_TEMPERATURE,
            max_output_tokens: 2048,
            stop_sequences: Vec::new(),
        }
    }

    pub fn judge() -> Self {
        Self {
            temperature: DEFAULT_JUDGE_TEMPERATURE,
            max_output_tokens: 512,
            stop_sequences: Vec::new(),
        }
    }

    pub fn request(
        &self,
        backend_id: &str,
        system_text: Option<String>,
        user_text: String,
        tag: CallTag,
    ) -> GenRequest {
        GenRequest {
            system_text,
            user_text,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            stop_sequences: self.stop_sequences.clone(),
            backend_id: backend_id.to_string(),
            tag,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("prompt exceeds the backend context window: {0}")]
    ContextOverflow(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

pub trait Policy: Send + Sync {
    fn id(&self) -> &str;

    fn generate(&self, request: &GenRequest) -> Result<GenResponse, BackendError>;

    /// Context window in tokens, when known.
    fn context_limit(&self) -> Option<usize> {
        None
    }
}

/// Rough token count used for offline backends and context budgeting.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
