use std::ops::Range;

use crate::model::Message;

/// Splits text into token spans. Truncation cuts on span boundaries, so an
/// implementation must return non-overlapping, ascending byte ranges.
pub trait Tokenizer: Send + Sync {
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

/// Default rule: every maximal alphanumeric run is one token, every other
/// non-whitespace character is one token, whitespace is free.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalTokenizer;

impl Tokenizer for LexicalTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut run_start: Option<usize> = None;
        for (idx, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                run_start.get_or_insert(idx);
                continue;
            }
            if let Some(start) = run_start.take() {
                spans.push(start..idx);
            }
            if !ch.is_whitespace() {
                spans.push(idx..idx + ch.len_utf8());
            }
        }
        if let Some(start) = run_start {
            spans.push(start..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        let mut count = 0;
        let mut in_run = false;
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                if !in_run {
                    count += 1;
                    in_run = true;
                }
            } else {
                in_run = false;
                if !ch.is_whitespace() {
                    count += 1;
                }
            }
        }
        count
    }
}

pub fn count_tokens(text: &str) -> usize {
    LexicalTokenizer.count(text)
}

/// Tokens a message contributes to a prompt: its content plus the names and
/// serialized arguments of any tool calls.
pub fn message_tokens_with(tokenizer: &dyn Tokenizer, msg: &Message) -> usize {
    let calls: usize = msg
        .tool_calls
        .iter()
        .map(|call| {
            let args = serde_json::to_string(&call.arguments).unwrap_or_default();
            tokenizer.count(&call.tool_name) + tokenizer.count(&args)
        })
        .sum();
    tokenizer.count(&msg.content) + calls
}

pub fn message_tokens(msg: &Message) -> usize {
    message_tokens_with(&LexicalTokenizer, msg)
}

pub fn transcript_tokens(messages: &[Message]) -> usize {
    messages.iter().map(message_tokens).sum()
}
