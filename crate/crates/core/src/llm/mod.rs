//! Chat-completion backends.
//!
//! [`ChatBackend`] is the single seam between the refinement loop and a
//! model. Two implementations ship: [`HttpBackend`] for a chat-completions
//! endpoint and [`ScriptedBackend`] for deterministic replay in tests and CI.

mod http;
mod mock;
pub mod tokenize;
pub mod wire;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use mock::{ScriptedBackend, ScriptedReply};
pub use tokenize::{count_tokens, message_tokens, transcript_tokens, LexicalTokenizer, Tokenizer};

use crate::model::{Message, Phase, Role, TokenUsage};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("script exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

fn default_retries() -> u32 {
    3
}

fn default_timeout_secs() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: String,
    /// Name of the environment variable holding the API key. Empty means the
    /// endpoint needs no key.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: "mock".into(),
            api_key_env: String::new(),
            max_retries: 0,
            request_timeout_secs: default_timeout_secs(),
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.kind == BackendKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(LlmError::Config("http backend requires an endpoint".into()));
        }
        if self.request_timeout_secs == 0 {
            return Err(LlmError::Config("request timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSchema {
    pub name: String,
    /// JSON type name, e.g. `string`.
    pub kind: String,
    pub description: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSchema>,
}

/// Assistant reply plus the token counts for the call that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub message: Message,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Completion {
    pub fn usage(&self, phase: Phase, round: u32) -> TokenUsage {
        TokenUsage {
            phase,
            round,
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, transcript: &[Message], tools: &[ToolSchema]) -> Result<Completion, LlmError>;

    /// Repositions a replaying backend after `calls_made` completed calls.
    /// Live backends ignore it.
    fn restore(&self, _calls_made: u64) {}
}

pub(crate) fn check_request(transcript: &[Message]) -> Result<(), LlmError> {
    let last = transcript
        .last()
        .ok_or_else(|| LlmError::InvalidRequest("empty transcript".into()))?;
    if !matches!(last.role, Role::User | Role::Tool) {
        return Err(LlmError::InvalidRequest(format!(
            "last message must be user or tool, got {}",
            last.role
        )));
    }
    Ok(())
}

/// Builds a backend from configuration. Mock backends need their script.
pub fn build_backend(
    config: &BackendConfig,
    script: Option<Vec<ScriptedReply>>,
) -> Result<Box<dyn ChatBackend>, LlmError> {
    config.validate()?;
    match config.kind {
        BackendKind::Http => Ok(Box::new(HttpBackend::new(config.clone())?)),
        BackendKind::Mock => Ok(Box::new(ScriptedBackend::new(script.unwrap_or_default()))),
    }
}
