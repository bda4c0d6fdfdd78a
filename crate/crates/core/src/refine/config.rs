use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    BestScore,
    MinVuln,
}

fn default_max_rounds() -> u32 {
    50
}
fn default_stagnation_n() -> u32 {
    2
}
fn default_tau() -> f64 {
    0.9
}
fn default_tool_failure_cap() -> u32 {
    3
}
fn default_keep_rounds() -> u32 {
    2
}
fn default_tool_call_cap() -> u32 {
    10
}

/// Loop limits and stopping thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    #[serde(default = "default_stagnation_n")]
    pub stagnation_n: u32,
    #[serde(default = "default_tau")]
    pub similarity_tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_budget_secs: Option<u64>,
    /// Consecutive failed tool calls that end the run.
    #[serde(default = "default_tool_failure_cap")]
    pub tool_failure_cap: u32,
    #[serde(default = "default_keep_rounds")]
    pub prune_keep_rounds: u32,
    #[serde(default)]
    pub selection_policy: SelectionPolicy,
    /// Tool calls allowed within one refinement round.
    #[serde(default = "default_tool_call_cap")]
    pub tool_call_cap: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_rounds: default_max_rounds(),
            stagnation_n: default_stagnation_n(),
            similarity_tau: default_tau(),
            token_budget: None,
            wall_clock_budget_secs: None,
            tool_failure_cap: default_tool_failure_cap(),
            prune_keep_rounds: default_keep_rounds(),
            selection_policy: SelectionPolicy::BestScore,
            tool_call_cap: default_tool_call_cap(),
        }
    }
}

impl LoopConfig {
    pub fn wall_clock_budget(&self) -> Option<Duration> {
        self.wall_clock_budget_secs.map(Duration::from_secs)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("max_rounds", self.max_rounds),
            ("stagnation_n", self.stagnation_n),
            ("tool_failure_cap", self.tool_failure_cap),
            ("prune_keep_rounds", self.prune_keep_rounds),
            ("tool_call_cap", self.tool_call_cap),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.similarity_tau > 0.0 && self.similarity_tau <= 1.0) {
            return Err("similarity_tau must lie in (0, 1]".into());
        }
        Ok(())
    }
}
