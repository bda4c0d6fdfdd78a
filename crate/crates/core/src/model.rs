//! Shared domain types.
//!
//! Everything here is a plain value: validation helpers and serde derives, no
//! I/O. Persisted roots carry [`SCHEMA_VERSION`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};

use globset::{GlobBuilder, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Version stamped on every persisted document (checkpoints, reports).
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("target file `{0}` escapes the repository root")]
    PathEscape(String),
    #[error("task `{0}` has an empty requirement")]
    EmptyRequirement(String),
    #[error("deny patterns do not cover `{0}`")]
    MissingDenyPattern(String),
    #[error("invalid glob `{pattern}`: {reason}")]
    InvalidGlob { pattern: String, reason: String },
    #[error("transcript integrity: {0}")]
    Integrity(String),
    #[error("invalid forge feedback: {0}")]
    Feedback(String),
}

fn default_test_dir() -> String {
    "test".to_string()
}

/// One generation task: which file to write, what it should do, and what the
/// agent must never see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTask {
    pub task_id: String,
    pub repo_root: PathBuf,
    /// Repository-relative path of the file the agent writes.
    pub target_file: PathBuf,
    pub requirement_full: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement_summary: Option<String>,
    #[serde(default)]
    pub test_suite_filter: String,
    #[serde(default)]
    pub deny_patterns: Vec<String>,
    /// Directory holding the task's test files (Foundry convention: `test`).
    #[serde(default = "default_test_dir")]
    pub test_dir: String,
    /// Repository-relative path of a stored reference solution, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<PathBuf>,
    /// Fixed number of benchmark tests; non-compiling candidates score 0 of these.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_tests: Option<u32>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl BenchmarkTask {
    /// Paths that must be matched by at least one deny pattern.
    pub fn required_denials(&self) -> Vec<String> {
        let mut required = vec![format!("{}/**", self.test_dir.trim_end_matches('/'))];
        if let Some(reference) = &self.reference_solution {
            required.push(slash_path(reference));
        }
        required
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_task(self)
    }
}

/// Checks every [`BenchmarkTask`] invariant.
pub fn validate_task(task: &BenchmarkTask) -> Result<(), ModelError> {
    let target = slash_path(&task.target_file);
    let normalized =
        normalize_relative(&task.target_file).ok_or_else(|| ModelError::PathEscape(target.clone()))?;
    if normalized.as_os_str().is_empty() {
        return Err(ModelError::PathEscape(target));
    }
    // Symlinked parents may still point outside; check on disk when possible.
    if let (Ok(root), Ok(full)) = (
        task.repo_root.canonicalize(),
        task.repo_root.join(&normalized).canonicalize(),
    ) {
        if !full.starts_with(&root) {
            return Err(ModelError::PathEscape(target));
        }
    }
    if task.requirement_full.trim().is_empty() {
        return Err(ModelError::EmptyRequirement(task.task_id.clone()));
    }
    let mut builder = GlobSetBuilder::new();
    for pattern in &task.deny_patterns {
        let glob = GlobBuilder::new(pattern)
            .literal_separator(true)
            .build()
            .map_err(|e| ModelError::InvalidGlob {
                pattern: pattern.clone(),
                reason: e.to_string(),
            })?;
        builder.add(glob);
    }
    let set = builder.build().map_err(|e| ModelError::InvalidGlob {
        pattern: task.deny_patterns.join(","),
        reason: e.to_string(),
    })?;
    for required in task.required_denials() {
        if !set.is_match(&required) {
            return Err(ModelError::MissingDenyPattern(required));
        }
    }
    Ok(())
}

/// Lexically normalizes a relative path. Returns `None` for absolute paths or
/// paths whose `..` components climb above the starting directory.
pub fn normalize_relative(path: &Path) -> Option<PathBuf> {
    let mut parts: Vec<&std::ffi::OsStr> = Vec::new();
    for component in path.components() {
        match component {
            Component::Normal(part) => parts.push(part),
            Component::CurDir => {}
            Component::ParentDir => {
                parts.pop()?;
            }
            Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    Some(parts.iter().collect())
}

/// Forward-slash rendering of a relative path, used for glob matching and text.
pub fn slash_path(path: &Path) -> String {
    path.components()
        .filter_map(|c| match c {
            Component::Normal(part) => Some(part.to_string_lossy().into_owned()),
            Component::ParentDir => Some("..".to_string()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, Value>,
}

impl ToolCall {
    pub fn new(id: impl Into<String>, tool_name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            tool_name: tool_name.into(),
            arguments: BTreeMap::new(),
        }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.arguments.insert(key.into(), value.into());
        self
    }
}

/// Metadata keys the loop attaches to transcript messages. Stripped by the
/// dataset cleaner.
pub mod meta {
    pub const ROUND: &str = "round";
    pub const KIND: &str = "kind";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    /// Run-internal annotations (round tags, kinds, timestamps).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

impl Message {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_with_calls(content: impl Into<String>, calls: Vec<ToolCall>) -> Self {
        let mut msg = Self::plain(Role::Assistant, content);
        msg.tool_calls = calls;
        msg
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        let mut msg = Self::plain(Role::Tool, content);
        msg.tool_call_id = Some(call_id.into());
        msg
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn round(&self) -> Option<u32> {
        self.meta
            .get(meta::ROUND)
            .and_then(Value::as_u64)
            .map(|r| r as u32)
    }

    pub fn has_tool_calls(&self) -> bool {
        !self.tool_calls.is_empty()
    }
}

/// Single forward pass over a transcript checking tool-call referential
/// integrity: ids unique, every tool message answers an earlier call.
pub fn validate_transcript(messages: &[Message]) -> Result<(), ModelError> {
    let mut issued: HashSet<&str> = HashSet::new();
    for (idx, msg) in messages.iter().enumerate() {
        match msg.role {
            Role::Tool => {
                let id = msg.tool_call_id.as_deref().ok_or_else(|| {
                    ModelError::Integrity(format!("tool message #{idx} has no tool_call_id"))
                })?;
                if !issued.contains(id) {
                    return Err(ModelError::Integrity(format!(
                        "tool message #{idx} answers unknown call `{id}`"
                    )));
                }
            }
            _ => {
                if msg.tool_call_id.is_some() {
                    return Err(ModelError::Integrity(format!(
                        "{} message #{idx} carries a tool_call_id",
                        msg.role
                    )));
                }
            }
        }
        if !msg.tool_calls.is_empty() && msg.role != Role::Assistant {
            return Err(ModelError::Integrity(format!(
                "{} message #{idx} carries tool_calls",
                msg.role
            )));
        }
        for call in &msg.tool_calls {
            if !issued.insert(call.id.as_str()) {
                return Err(ModelError::Integrity(format!(
                    "duplicate tool_call id `{}`",
                    call.id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFailure {
    pub test_name: String,
    pub assertion_message: String,
    #[serde(default)]
    pub trace_excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ForgeFeedback {
    pub compiled: bool,
    pub total_tests: u32,
    pub passed_tests: u32,
    #[serde(default)]
    pub failures: Vec<TestFailure>,
    /// Gas per executed test, keyed by test name.
    #[serde(default)]
    pub gas_by_test: BTreeMap<String, u64>,
}

impl ForgeFeedback {
    /// Feedback for a candidate that failed to build.
    pub fn compile_failure(diagnostics: impl Into<String>) -> Self {
        Self {
            compiled: false,
            total_tests: 0,
            passed_tests: 0,
            failures: vec![TestFailure {
                test_name: "<compile>".to_string(),
                assertion_message: diagnostics.into(),
                trace_excerpt: String::new(),
            }],
            gas_by_test: BTreeMap::new(),
        }
    }

    pub fn pass_rate(&self) -> f64 {
        if self.total_tests == 0 {
            0.0
        } else {
            f64::from(self.passed_tests) / f64::from(self.total_tests)
        }
    }

    /// Gas of tests that passed (executed and not listed as failures).
    pub fn passed_gas(&self) -> BTreeMap<String, u64> {
        if !self.compiled {
            return BTreeMap::new();
        }
        let failed: HashSet<&str> = self.failures.iter().map(|f| f.test_name.as_str()).collect();
        self.gas_by_test
            .iter()
            .filter(|(name, _)| !failed.contains(name.as_str()))
            .map(|(name, gas)| (name.clone(), *gas))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.passed_tests > self.total_tests {
            return Err(ModelError::Feedback(format!(
                "passed {} exceeds total {}",
                self.passed_tests, self.total_tests
            )));
        }
        if self.compiled {
            let failing = (self.total_tests - self.passed_tests) as usize;
            if self.failures.len() != failing {
                return Err(ModelError::Feedback(format!(
                    "{} failures recorded for {} failing tests",
                    self.failures.len(),
                    failing
                )));
            }
        } else if self.total_tests != 0 || self.passed_tests != 0 || self.failures.len() != 1 {
            return Err(ModelError::Feedback(
                "non-compiling feedback must have zero tests and one diagnostic entry".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    High,
    Medium,
    Low,
}

impl Severity {
    /// Maps an analyzer impact label; Informational/Optimization map to `None`.
    pub fn from_impact(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "high" => Some(Severity::High),
            "medium" => Some(Severity::Medium),
            "low" => Some(Severity::Low),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Severity::High => "HIGH",
            Severity::Medium => "MEDIUM",
            Severity::Low => "LOW",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlitherFinding {
    pub detector_id: String,
    pub severity: Severity,
    pub description: String,
    pub location: Location,
}

impl SlitherFinding {
    pub fn sort_key(&self) -> (&str, u32, &str) {
        (&self.location.file, self.location.line, &self.detector_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeverityCounts {
    pub high: u32,
    pub medium: u32,
    pub low: u32,
}

impl SeverityCounts {
    pub fn from_findings(findings: &[SlitherFinding]) -> Self {
        let mut counts = Self::default();
        for finding in findings {
            match finding.severity {
                Severity::High => counts.high += 1,
                Severity::Medium => counts.medium += 1,
                Severity::Low => counts.low += 1,
            }
        }
        counts
    }

    pub fn total(&self) -> u32 {
        self.high + self.medium + self.low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub round: u32,
    pub forge: ForgeFeedback,
    pub findings: Vec<SlitherFinding>,
    pub rendered_text: String,
    /// Non-fatal verifier problems (analyzer crash, etc.).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FeedbackReport {
    pub fn severity_counts(&self) -> SeverityCounts {
        SeverityCounts::from_findings(&self.findings)
    }
}

/// Ordered quality of a verified candidate.
///
/// Compared lexicographically: compiled first, then pass rate, then High,
/// Medium and Low finding counts (fewer is better), then average gas of
/// passed tests (lower is better, absent is worst). Greater is better.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Score {
    pub compiled: bool,
    pub pass_rate: f64,
    pub high: u32,
    pub medium: u32,
    pub low: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_gas_passed: Option<f64>,
}

impl Score {
    pub fn from_feedback(forge: &ForgeFeedback, findings: &[SlitherFinding]) -> Self {
        let counts = SeverityCounts::from_findings(findings);
        let passed = forge.passed_gas();
        let avg_gas_passed = if passed.is_empty() {
            None
        } else {
            let sum: u128 = passed.values().map(|g| u128::from(*g)).sum();
            Some(sum as f64 / passed.len() as f64)
        };
        Self {
            compiled: forge.compiled,
            pass_rate: forge.pass_rate(),
            high: counts.high,
            medium: counts.medium,
            low: counts.low,
            avg_gas_passed,
        }
    }

    pub fn vuln_total(&self) -> u32 {
        self.high + self.medium + self.low
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        let gas = |g: Option<f64>| g.unwrap_or(f64::INFINITY);
        self.compiled
            .cmp(&other.compiled)
            .then_with(|| self.pass_rate.total_cmp(&other.pass_rate))
            .then_with(|| other.high.cmp(&self.high))
            .then_with(|| other.medium.cmp(&self.medium))
            .then_with(|| other.low.cmp(&self.low))
            .then_with(|| gas(other.avg_gas_passed).total_cmp(&gas(self.avg_gas_passed)))
    }
}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub round: u32,
    pub code: String,
    pub score: Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Coding,
    Refine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub phase: Phase,
    pub round: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn is_consistent(&self) -> bool {
        match self.phase {
            Phase::Coding => self.round == 0,
            Phase::Refine => self.round >= 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationKind {
    Success,
    Stagnation,
    Oscillation,
    MaxRounds,
    TokenBudget,
    WallClock,
    ToolFailureCap,
    LlmError,
    CodeHashRepeat,
    EmptyOutput,
    OperatorStop,
}

impl TerminationKind {
    pub const ALL: [TerminationKind; 11] = [
        TerminationKind::Success,
        TerminationKind::Stagnation,
        TerminationKind::Oscillation,
        TerminationKind::MaxRounds,
        TerminationKind::TokenBudget,
        TerminationKind::WallClock,
        TerminationKind::ToolFailureCap,
        TerminationKind::LlmError,
        TerminationKind::CodeHashRepeat,
        TerminationKind::EmptyOutput,
        TerminationKind::OperatorStop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminationKind::Success => "success",
            TerminationKind::Stagnation => "stagnation",
            TerminationKind::Oscillation => "oscillation",
            TerminationKind::MaxRounds => "max_rounds",
            TerminationKind::TokenBudget => "token_budget",
            TerminationKind::WallClock => "wall_clock",
            TerminationKind::ToolFailureCap => "tool_failure_cap",
            TerminationKind::LlmError => "llm_error",
            TerminationKind::CodeHashRepeat => "code_hash_repeat",
            TerminationKind::EmptyOutput => "empty_output",
            TerminationKind::OperatorStop => "operator_stop",
        }
    }
}

impl fmt::Display for TerminationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationReason {
    pub kind: TerminationKind,
    pub detail: String,
}

impl TerminationReason {
    pub fn new(kind: TerminationKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }
}

/// Which requirement text seeded the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequirementMode {
    #[default]
    Full,
    Summary,
}

/// Candidate produced by the agent but not yet verified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingCandidate {
    pub round: u32,
    pub code: String,
}

/// Resumable loop state. `round` counts completed refinement iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub schema_version: u32,
    pub task_id: String,
    #[serde(default)]
    pub requirement_mode: RequirementMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_tests: Option<u32>,
    pub round: u32,
    pub transcript: Vec<Message>,
    pub best: Option<Candidate>,
    /// Every verified candidate, in round order.
    #[serde(default)]
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingCandidate>,
    pub history: Vec<FeedbackReport>,
    pub usage: Vec<TokenUsage>,
    /// Number of completed backend calls; lets scripted backends resume in place.
    #[serde(default)]
    pub llm_calls: u64,
    /// Consecutive failed tool dispatches.
    #[serde(default)]
    pub tool_failures: u32,
    #[serde(default)]
    pub code_hashes: Vec<String>,
    pub terminated: Option<TerminationReason>,
}

impl RunState {
    pub fn new(task: &BenchmarkTask, mode: RequirementMode) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task_id: task.task_id.clone(),
            requirement_mode: mode,
            expected_tests: task.expected_tests,
            round: 0,
            transcript: Vec::new(),
            best: None,
            candidates: Vec::new(),
            pending: None,
            history: Vec::new(),
            usage: Vec::new(),
            llm_calls: 0,
            tool_failures: 0,
            code_hashes: Vec::new(),
            terminated: None,
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated.is_some()
    }

    pub fn total_tokens(&self) -> u64 {
        self.usage.iter().map(TokenUsage::total).sum()
    }

    /// The verification report that scored `candidate`.
    pub fn report_for(&self, candidate: &Candidate) -> Option<&FeedbackReport> {
        self.history.iter().find(|r| r.round == candidate.round + 1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run state serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantTag {
    Tracker,
    MixSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub messages: Vec<Message>,
    pub task_id: String,
    pub round: u32,
    #[serde(default)]
    pub variant_tags: std::collections::BTreeSet<VariantTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionComplexity {
    pub name: String,
    pub line: u32,
    pub complexity: u32,
}

/// Line counts and cyclomatic complexity of one source file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub loc: u32,
    pub ploc: u32,
    pub functions: Vec<FunctionComplexity>,
    pub complexity: u32,
}
