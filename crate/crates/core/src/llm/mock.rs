use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::tokenize::{count_tokens, transcript_tokens};
use super::{check_request, ChatBackend, Completion, LlmError, ToolSchema};
use crate::model::{Message, ToolCall};

/// One canned assistant turn.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptedReply {
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    /// Simulated transport failure instead of a reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl ScriptedReply {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            ..Default::default()
        }
    }

    /// A reply consisting of one fenced Solidity block.
    pub fn code(code: &str) -> Self {
        Self::text(format!("```solidity\n{code}\n```"))
    }

    pub fn calls(calls: Vec<ToolCall>) -> Self {
        Self {
            tool_calls: calls,
            ..Default::default()
        }
    }

    pub fn failure(reason: impl Into<String>) -> Self {
        Self {
            error: Some(reason.into()),
            ..Default::default()
        }
    }
}

/// Deterministic backend that replays a script, one entry per call.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Vec<ScriptedReply>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(script: Vec<ScriptedReply>) -> Self {
        Self {
            script,
            cursor: Mutex::new(0),
        }
    }

    /// Number of entries consumed so far.
    pub fn calls(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.script.len().saturating_sub(self.calls())
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, transcript: &[Message], _tools: &[ToolSchema]) -> Result<Completion, LlmError> {
        check_request(transcript)?;
        let mut cursor = self.cursor.lock().unwrap();
        let entry = self
            .script
            .get(*cursor)
            .ok_or(LlmError::ScriptExhausted(*cursor))?;
        *cursor += 1;
        if let Some(reason) = &entry.error {
            return Err(LlmError::Transport(reason.clone()));
        }
        let message = Message::assistant_with_calls(entry.content.clone(), entry.tool_calls.clone());
        let prompt_tokens = entry
            .prompt_tokens
            .unwrap_or_else(|| transcript_tokens(transcript) as u64);
        let completion_tokens = entry
            .completion_tokens
            .unwrap_or_else(|| count_tokens(&entry.content) as u64);
        Ok(Completion {
            message,
            prompt_tokens,
            completion_tokens,
        })
    }

    fn restore(&self, calls_made: u64) {
        *self.cursor.lock().unwrap() = calls_made as usize;
    }
}
