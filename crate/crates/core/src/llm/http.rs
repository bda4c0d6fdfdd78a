use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;
use tracing::warn;

use super::tokenize::{count_tokens, transcript_tokens};
use super::wire::{tool_declaration, WireMessage};
use super::{check_request, BackendConfig, ChatBackend, Completion, LlmError, ToolSchema};
use crate::model::{Message, Role};

/// Chat-completions client over HTTP.
///
/// Transport failures, 429 and 5xx responses are retried up to
/// `max_retries` times; authentication failures and other 4xx are not.
#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    endpoint: String,
    client: Client,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let endpoint = config.endpoint.clone().unwrap_or_default();
        let client = Client::builder()
            .timeout(config.request_timeout())
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            config,
            endpoint,
            client,
        })
    }

    fn api_key(&self) -> Result<Option<String>, LlmError> {
        if self.config.api_key_env.is_empty() {
            return Ok(None);
        }
        match std::env::var(&self.config.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(Some(key)),
            _ => Err(LlmError::Authentication(format!(
                "environment variable `{}` is not set",
                self.config.api_key_env
            ))),
        }
    }

    fn request_body(&self, transcript: &[Message], tools: &[ToolSchema]) -> Value {
        let messages: Vec<WireMessage> = transcript.iter().map(WireMessage::from).collect();
        let mut body = serde_json::json!({
            "model": self.config.model_name,
            "messages": messages,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(tools.iter().map(tool_declaration).collect());
        }
        body
    }

    fn send_once(&self, body: &Value, key: Option<&str>) -> Result<Value, Attempt> {
        let mut request = self.client.post(&self.endpoint).json(body);
        if let Some(key) = key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| Attempt::Retry(LlmError::Transport(e.to_string())))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Attempt::Retry(LlmError::Transport(e.to_string())))?;
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Attempt::Fatal(LlmError::Authentication(format!(
                "HTTP {}",
                status.as_u16()
            ))));
        }
        if !status.is_success() {
            let err = LlmError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            };
            return if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                Err(Attempt::Retry(err))
            } else {
                Err(Attempt::Fatal(err))
            };
        }
        serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(LlmError::MalformedResponse(e.to_string())))
    }
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

/// Accepts both `{message, usage}` and `{choices: [{message}], usage}`.
pub(crate) fn parse_response(payload: &Value, transcript: &[Message]) -> Result<Completion, LlmError> {
    let message_value = payload
        .get("message")
        .or_else(|| payload.pointer("/choices/0/message"))
        .ok_or_else(|| LlmError::MalformedResponse("response has no message".into()))?;
    let wire: WireMessage = serde_json::from_value(message_value.clone())
        .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    if wire.role != Role::Assistant {
        return Err(LlmError::MalformedResponse(format!(
            "expected assistant reply, got {}",
            wire.role
        )));
    }
    let message = Message::from(&wire);
    let usage = payload.get("usage");
    let field = |name: &str| usage.and_then(|u| u.get(name)).and_then(Value::as_u64);
    Ok(Completion {
        prompt_tokens: field("prompt_tokens").unwrap_or_else(|| transcript_tokens(transcript) as u64),
        completion_tokens: field("completion_tokens")
            .unwrap_or_else(|| count_tokens(&message.content) as u64),
        message,
    })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, transcript: &[Message], tools: &[ToolSchema]) -> Result<Completion, LlmError> {
        check_request(transcript)?;
        let key = self.api_key()?;
        let body = self.request_body(transcript, tools);
        let mut attempt = 0u32;
        loop {
            match self.send_once(&body, key.as_deref()) {
                Ok(payload) => return parse_response(&payload, transcript),
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(err)) => {
                    if attempt >= self.config.max_retries {
                        return Err(err);
                    }
                    attempt += 1;
                    warn!(attempt, error = %err, "retrying chat completion");
                    thread::sleep(Duration::from_millis(50u64 << attempt.min(6)));
                }
            }
        }
    }
}
