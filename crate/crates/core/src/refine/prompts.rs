use serde::{Deserialize, Serialize};

use crate::model::{slash_path, BenchmarkTask, FeedbackReport};

fn default_coding_system() -> String {
    "You are a senior Solidity engineer. Implement the requested contract exactly as specified. \
Reply with the complete source file in a single ```solidity fenced block."
        .into()
}

fn default_refine_system() -> String {
    "You are now refining the contract you wrote. Each round you receive compiler, test and \
static-analysis feedback. Fix failing tests first, then remove security findings, then reduce gas. \
You may inspect the project with the list_directory and read_file tools. When you are done, reply \
with the complete revised source file in a single ```solidity fenced block."
        .into()
}

/// Prompt texts for both agents. Configuration, not behaviour: any wording
/// works as long as the agent replies with a fenced code block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompts {
    #[serde(default = "default_coding_system")]
    pub coding_system: String,
    #[serde(default = "default_refine_system")]
    pub refine_system: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            coding_system: default_coding_system(),
            refine_system: default_refine_system(),
        }
    }
}

impl Prompts {
    pub fn requirement(&self, task: &BenchmarkTask, requirement: &str) -> String {
        format!(
            "Write `{}`.\n\nRequirements:\n{}",
            slash_path(&task.target_file),
            requirement.trim()
        )
    }

    /// Feedback message for one round. The first line is the report's
    /// summary line so a pruned copy stays informative.
    pub fn feedback(&self, task: &BenchmarkTask, report: &FeedbackReport, code: &str) -> String {
        format!(
            "{}\nCurrent `{}`:\n```solidity\n{}\n```",
            report.rendered_text.trim_end(),
            slash_path(&task.target_file),
            code.trim_end()
        )
    }

    pub fn tool_cap_reached(&self, cap: u32) -> String {
        format!("error: the limit of {cap} tool calls for this round is reached; reply with the complete contract")
    }
}
