use std::collections::HashMap;

use crate::llm::count_tokens;
use crate::model::{Message, Role};

const PRUNED_TOOL_PREFIX: &str = "[pruned tool output:";
const PRUNED_FEEDBACK_PREFIX: &str = "[pruned feedback;";

/// Round index of each message: every user message after the first opens a
/// new round; everything before it belongs to round 0.
pub fn message_rounds(transcript: &[Message]) -> Vec<u32> {
    let mut seen_user = false;
    let mut round = 0;
    transcript
        .iter()
        .map(|msg| {
            if msg.role == Role::User {
                if seen_user {
                    round += 1;
                }
                seen_user = true;
            }
            round
        })
        .collect()
}

fn pass_ratio_line(content: &str) -> Option<&str> {
    content.lines().map(str::trim).find(|l| l.starts_with("passed:"))
}

fn prune_feedback(content: &str) -> String {
    if content.contains(PRUNED_FEEDBACK_PREFIX) {
        return content.to_string();
    }
    let first = content.lines().next().unwrap_or_default();
    match pass_ratio_line(content) {
        Some(ratio) => format!("{first}\n{PRUNED_FEEDBACK_PREFIX} {ratio}]"),
        None => format!("{first}\n{PRUNED_FEEDBACK_PREFIX} details omitted]"),
    }
}

/// Shrinks a transcript before it is sent to the model.
///
/// System messages, the first user message and the last `keep_rounds`
/// rounds stay intact. Older tool results become a one-line placeholder and
/// older feedback messages keep their first line plus the pass ratio.
/// Assistant messages (and their tool calls) are never touched, so tool-call
/// referential integrity is preserved.
pub fn prune_messages(transcript: &[Message], keep_rounds: u32) -> Vec<Message> {
    let rounds = message_rounds(transcript);
    let last = rounds.last().copied().unwrap_or(0);
    let cutoff = last.saturating_sub(keep_rounds.saturating_sub(1));
    let mut tool_names: HashMap<&str, &str> = HashMap::new();
    let mut first_user_seen = false;

    transcript
        .iter()
        .zip(&rounds)
        .map(|(msg, &round)| {
            for call in &msg.tool_calls {
                tool_names.insert(call.id.as_str(), call.tool_name.as_str());
            }
            let is_first_user = msg.role == Role::User && !first_user_seen;
            if msg.role == Role::User {
                first_user_seen = true;
            }
            if round >= cutoff || is_first_user {
                return msg.clone();
            }
            let mut pruned = msg.clone();
            match msg.role {
                Role::Tool if !msg.content.starts_with(PRUNED_TOOL_PREFIX) => {
                    let name = msg
                        .tool_call_id
                        .as_deref()
                        .and_then(|id| tool_names.get(id))
                        .copied()
                        .unwrap_or("unknown");
                    pruned.content = format!(
                        "{PRUNED_TOOL_PREFIX} {name}, {} tokens]",
                        count_tokens(&msg.content)
                    );
                }
                Role::User => pruned.content = prune_feedback(&msg.content),
                _ => {}
            }
            pruned
        })
        .collect()
}
