//! Training samples from recorded runs: per-round capture, cleaning, the
//! tracker and mix variants, task-level splits, truncation and statistics.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{count_tokens, message_tokens, ChatBackend, LexicalTokenizer, LlmError, Tokenizer};
use crate::metrics::thousands;
use crate::model::{
    validate_transcript, BenchmarkTask, Message, RequirementMode, Role, RunState, TerminationKind,
    TrajectorySample, VariantTag,
};
use crate::refine::message_rounds;

pub const DEFAULT_TRUNCATE_LIMIT: usize = 4096;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

const SUMMARY_SYSTEM: &str = "You compress Solidity requirement comments into a concise functional summary. \
Keep the contract's purpose and the observable behaviour of each function. Reply with the summary only.";

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("sample integrity: {0}")]
    Integrity(String),
    #[error("mix dataset needs summary-mode runs and none were given")]
    MissingSummary,
    #[error("degenerate summary: {0}")]
    Degenerate(String),
    #[error("split needs at least 2 tasks, found {0}")]
    TooFewTasks(usize),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetVariant {
    Tracker,
    Mix,
}

impl DatasetVariant {
    pub fn dataset_name(self) -> &'static str {
        match self {
            DatasetVariant::Tracker => "dataset_tracker",
            DatasetVariant::Mix => "dataset_mix",
        }
    }
}

impl std::str::FromStr for DatasetVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tracker" => Ok(Self::Tracker),
            "mix" => Ok(Self::Mix),
            other => Err(format!("unknown dataset variant `{other}` (expected tracker or mix)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncateMode {
    Forward,
    Backward,
}

impl std::str::FromStr for TruncateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            other => Err(format!("unknown truncation mode `{other}` (expected forward or backward)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    /// Admit runs that did not end in success.
    pub include_all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<TrajectorySample>,
    pub split_seed: u64,
}

impl Dataset {
    /// Distinct task ids, sorted.
    pub fn task_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.samples.iter().map(|s| s.task_id.as_str()).collect();
        ids.into_iter().map(str::to_string).collect()
    }

    /// One JSON object per sample: `{messages, tags}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TrajectoryError> {
        for sample in &self.samples {
            let line = serde_json::to_string(&JsonlRecord::from_sample(sample)).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonlRecord {
    pub messages: Vec<Message>,
    pub tags: Vec<String>,
}

impl JsonlRecord {
    pub fn from_sample(sample: &TrajectorySample) -> Self {
        let mut messages = sample.messages.clone();
        for msg in &mut messages {
            msg.meta.clear();
        }
        let tags = sample
            .variant_tags
            .iter()
            .map(|t| match t {
                VariantTag::Tracker => "tracker".to_string(),
                VariantTag::MixSummary => "mix-summary".to_string(),
            })
            .collect();
        Self { messages, tags }
    }
}

/// Round of each message: the recorded round tag when present, otherwise
/// the structural round (each user message after the first opens one).
fn rounds_of(transcript: &[Message]) -> Vec<u32> {
    let structural = message_rounds(transcript);
    transcript
        .iter()
        .zip(structural)
        .map(|(msg, fallback)| msg.round().unwrap_or(fallback))
        .collect()
}

/// One sample per conversation round that produced an assistant reply.
/// A sample is the transcript prefix ending at that round's last assistant
/// message.
pub fn record_rounds(state: &RunState) -> Vec<TrajectorySample> {
    let rounds = rounds_of(&state.transcript);
    let tag = match state.requirement_mode {
        RequirementMode::Full => VariantTag::Tracker,
        RequirementMode::Summary => VariantTag::MixSummary,
    };
    let mut last_assistant: Vec<(u32, usize)> = Vec::new();
    for (idx, msg) in state.transcript.iter().enumerate() {
        if msg.role != Role::Assistant {
            continue;
        }
        match last_assistant.last_mut() {
            Some((round, end)) if *round == rounds[idx] => *end = idx,
            _ => last_assistant.push((rounds[idx], idx)),
        }
    }
    last_assistant
        .into_iter()
        .map(|(round, end)| TrajectorySample {
            messages: state.transcript[..=end].to_vec(),
            task_id: state.task_id.clone(),
            round,
            variant_tags: BTreeSet::from([tag]),
        })
        .collect()
}

/// Strips run-internal annotations. Roles, contents, tool calls and tool
/// call ids are kept verbatim.
pub fn clean(sample: &TrajectorySample) -> Result<TrajectorySample, TrajectoryError> {
    let mut out = sample.clone();
    for msg in &mut out.messages {
        msg.meta.clear();
    }
    validate_transcript(&out.messages).map_err(|e| TrajectoryError::Integrity(e.to_string()))?;
    Ok(out)
}

fn succeeded(state: &RunState) -> bool {
    matches!(&state.terminated, Some(reason) if reason.kind == TerminationKind::Success)
}

fn samples_from(runs: &[&RunState], options: BuildOptions) -> Result<Vec<TrajectorySample>, TrajectoryError> {
    let mut samples = Vec::new();
    for run in runs {
        if !options.include_all && !succeeded(run) {
            continue;
        }
        for sample in record_rounds(run) {
            samples.push(clean(&sample)?);
        }
    }
    Ok(samples)
}

/// Tracker keeps full-requirement runs; mix adds the summary-mode runs.
/// Runs are ordered by task id so the output does not depend on input order.
pub fn build_dataset(
    runs: &[RunState],
    variant: DatasetVariant,
    options: BuildOptions,
) -> Result<Dataset, TrajectoryError> {
    let mut ordered: Vec<&RunState> = runs.iter().collect();
    ordered.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let (full, summary): (Vec<&RunState>, Vec<&RunState>) =
        ordered.into_iter().partition(|r| r.requirement_mode == RequirementMode::Full);
    let mut samples = samples_from(&full, options)?;
    if variant == DatasetVariant::Mix {
        if summary.is_empty() {
            return Err(TrajectoryError::MissingSummary);
        }
        samples.extend(samples_from(&summary, options)?);
    }
    Ok(Dataset {
        name: variant.dataset_name().to_string(),
        samples,
        split_seed: 0,
    })
}

/// Asks the backend for a concise summary of `requirement_full`. The reply
/// must be non-empty and strictly shorter in tokens.
pub fn summarize_requirement(task: &BenchmarkTask, llm: &dyn ChatBackend) -> Result<String, TrajectoryError> {
    let full = task.requirement_full.trim();
    if full.is_empty() {
        return Err(TrajectoryError::Degenerate("requirement is empty".into()));
    }
    let request = [Message::system(SUMMARY_SYSTEM), Message::user(full)];
    let reply = llm.complete(&request, &[])?;
    let summary = reply.message.content.trim().to_string();
    if summary.is_empty() {
        return Err(TrajectoryError::Degenerate("summary is empty".into()));
    }
    let (short, long) = (count_tokens(&summary), count_tokens(full));
    if short >= long {
        return Err(TrajectoryError::Degenerate(format!(
            "summary has {short} tokens, requirement has {long}"
        )));
    }
    Ok(summary)
}

/// Fills `requirement_summary` when absent and returns it.
pub fn ensure_summary<'a>(task: &'a mut BenchmarkTask, llm: &dyn ChatBackend) -> Result<&'a str, TrajectoryError> {
    if task.requirement_summary.as_deref().is_none_or(|s| s.trim().is_empty()) {
        task.requirement_summary = Some(summarize_requirement(task, llm)?);
    }
    Ok(task.requirement_summary.as_deref().unwrap_or_default())
}

/// Task-level split: sorted task ids are shuffled with a seeded ChaCha8 and
/// the first `round(train_frac * n)` (clamped to 1..n-1) go to train.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset), TrajectoryError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(TrajectoryError::InvalidFraction(train_frac));
    }
    let mut ids = ds.task_ids();
    let n = ids.len();
    if n < 2 {
        return Err(TrajectoryError::TooFewTasks(n));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_n = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let train_ids: HashSet<&str> = ids[..train_n].iter().map(String::as_str).collect();
    let (train, test): (Vec<_>, Vec<_>) =
        ds.samples.iter().cloned().partition(|s| train_ids.contains(s.task_id.as_str()));
    let side = |suffix: &str, samples| Dataset {
        name: format!("{}_{suffix}", ds.name),
        samples,
        split_seed: seed,
    };
    Ok((side("train", train), side("test", test)))
}

fn call_tokens(tokenizer: &dyn Tokenizer, msg: &Message) -> usize {
    msg.tool_calls
        .iter()
        .map(|call| {
            let args = serde_json::to_string(&call.arguments).unwrap_or_default();
            tokenizer.count(&call.tool_name) + tokenizer.count(&args)
        })
        .sum()
}

/// Keeps `budget` tokens of the boundary message's content, from the front
/// or the back. Tool calls are kept whole or the message is dropped.
fn cut_message(tokenizer: &dyn Tokenizer, msg: &Message, budget: usize, mode: TruncateMode) -> Option<Message> {
    let calls = call_tokens(tokenizer, msg);
    if calls > budget {
        return None;
    }
    let keep = budget - calls;
    let spans = tokenizer.spans(&msg.content);
    let content = if keep == 0 {
        String::new()
    } else if keep >= spans.len() {
        msg.content.clone()
    } else {
        match mode {
            TruncateMode::Forward => msg.content[..spans[keep - 1].end].to_string(),
            TruncateMode::Backward => msg.content[spans[spans.len() - keep].start..].to_string(),
        }
    };
    if content.is_empty() && msg.tool_calls.is_empty() {
        return None;
    }
    Some(Message {
        content,
        ..msg.clone()
    })
}

/// Drops tool messages whose call is no longer in the sample.
fn drop_orphans(messages: Vec<Message>) -> Vec<Message> {
    let mut issued: HashSet<String> = HashSet::new();
    let mut answered: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(messages.len());
    for msg in messages {
        if msg.role == Role::Tool {
            match msg.tool_call_id.as_deref() {
                Some(id) if issued.contains(id) && !answered.contains(id) => {
                    answered.insert(id.to_string());
                }
                _ => continue,
            }
        }
        issued.extend(msg.tool_calls.iter().map(|c| c.id.clone()));
        out.push(msg);
    }
    out
}

fn tokens(messages: &[Message]) -> usize {
    messages.iter().map(message_tokens).sum()
}

/// Caps a sample at `limit` tokens. Whole messages are kept while they fit;
/// the first one that does not is cut inside its content. Backward mode
/// keeps the final assistant message whole whenever it fits on its own,
/// dropping trailing messages after it if needed.
pub fn truncate(sample: &TrajectorySample, limit: usize, mode: TruncateMode) -> TrajectorySample {
    let tokenizer = LexicalTokenizer;
    if tokens(&sample.messages) <= limit {
        return sample.clone();
    }
    let mut source: &[Message] = &sample.messages;
    let mut kept: Vec<Message> = Vec::new();
    let mut budget = limit;
    match mode {
        TruncateMode::Forward => {
            for msg in source {
                let cost = message_tokens(msg);
                if cost <= budget {
                    budget -= cost;
                    kept.push(msg.clone());
                    continue;
                }
                kept.extend(cut_message(&tokenizer, msg, budget, mode));
                break;
            }
        }
        TruncateMode::Backward => {
            if let Some(last) = source.iter().rposition(|m| m.role == Role::Assistant) {
                if message_tokens(&source[last]) <= limit {
                    let mut end = source.len();
                    while tokens(&source[last..end]) > limit {
                        end -= 1;
                    }
                    source = &source[..end];
                }
            }
            for msg in source.iter().rev() {
                let cost = message_tokens(msg);
                if cost <= budget {
                    budget -= cost;
                    kept.push(msg.clone());
                    continue;
                }
                kept.extend(cut_message(&tokenizer, msg, budget, mode));
                break;
            }
            kept.reverse();
        }
    }
    TrajectorySample {
        messages: drop_orphans(kept),
        ..sample.clone()
    }
}

/// Table layout: samples, samples with tool calls, total messages, average
/// messages per sample, tool messages, assistant messages with tool calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub sample_count: u64,
    pub samples_with_tool_calls: u64,
    pub tool_call_pct: f64,
    pub total_messages: u64,
    pub avg_messages_per_sample: f64,
    pub tool_messages: u64,
    pub assistant_tool_messages: u64,
}

impl DatasetStats {
    pub fn from_counts(
        name: &str,
        sample_count: u64,
        samples_with_tool_calls: u64,
        total_messages: u64,
        tool_messages: u64,
        assistant_tool_messages: u64,
    ) -> Self {
        let per_sample = |n: u64| if sample_count == 0 { 0.0 } else { n as f64 / sample_count as f64 };
        Self {
            name: name.to_string(),
            sample_count,
            samples_with_tool_calls,
            tool_call_pct: per_sample(samples_with_tool_calls) * 100.0,
            total_messages,
            avg_messages_per_sample: per_sample(total_messages),
            tool_messages,
            assistant_tool_messages,
        }
    }

    pub const MARKDOWN_HEADER: &'static str = "| Dataset | # Samples | % Tool Calls | # Total Msgs | # Avg Msgs/Sample | # Tool Msgs | # Assist. Tool Msgs |";

    pub fn markdown_row(&self) -> String {
        format!(
            "| {} | {} | {} ({:.1}%) | {} | {:.2} | {} | {} |",
            self.name,
            thousands(self.sample_count),
            thousands(self.samples_with_tool_calls),
            self.tool_call_pct,
            thousands(self.total_messages),
            self.avg_messages_per_sample,
            thousands(self.tool_messages),
            thousands(self.assistant_tool_messages),
        )
    }
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let mut with_calls = 0;
    let mut total = 0;
    let mut tool = 0;
    let mut assistant_tool = 0;
    for sample in &ds.samples {
        total += sample.messages.len() as u64;
        let calls = sample
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant && m.has_tool_calls())
            .count() as u64;
        assistant_tool += calls;
        if calls > 0 {
            with_calls += 1;
        }
        tool += sample.messages.iter().filter(|m| m.role == Role::Tool).count() as u64;
    }
    DatasetStats::from_counts(&ds.name, ds.samples.len() as u64, with_calls, total, tool, assistant_tool)
}

pub fn stats_markdown(stats: &[DatasetStats]) -> String {
    let mut out = String::new();
    out.push_str(DatasetStats::MARKDOWN_HEADER);
    out.push('\n');
    out.push_str("|---|---|---|---|---|---|---|\n");
    for s in stats {
        out.push_str(&s.markdown_row());
        out.push('\n');
    }
    out
}
