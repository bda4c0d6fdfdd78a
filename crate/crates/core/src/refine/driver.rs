use std::path::{Path, PathBuf};
use std::time::Instant;

use tracing::{debug, info};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::extract::{code_hash, extract_code};
use super::prompts::Prompts;
use super::prune::prune_messages;
use super::stopping::{is_looping, is_perfect, is_stagnant, update_best};
use super::workspace::write_candidate;
use super::{LoopConfig, RefineError};
use crate::llm::{ChatBackend, ToolSchema};
use crate::model::{
    meta, BenchmarkTask, Candidate, Message, PendingCandidate, Phase, RequirementMode, RunState, Score,
    TerminationKind, TerminationReason,
};
use crate::toolbox::Toolbox;
use crate::verify::Verifier;

/// Polled once per round; returning `true` stops the run (`operator_stop`).
pub type StopSignal = dyn Fn() -> bool + Send + Sync;

enum RoundEnd {
    /// New candidate; `fresh` is false when the previous code was carried over.
    Code { code: String, fresh: bool },
    Stop(TerminationReason),
}

/// Drives one task through the loop. Every call to [`Refiner::step`]
/// performs one round and checkpoints the result, so a run can be stopped
/// between any two steps and resumed from disk.
pub struct Refiner<'a> {
    task: &'a BenchmarkTask,
    llm: &'a dyn ChatBackend,
    verifier: &'a dyn Verifier,
    toolbox: &'a Toolbox,
    config: &'a LoopConfig,
    prompts: Prompts,
    mode: RequirementMode,
    checkpoints: Option<PathBuf>,
    stop: Option<&'a StopSignal>,
    started: Instant,
}

impl<'a> Refiner<'a> {
    pub fn new(
        task: &'a BenchmarkTask,
        llm: &'a dyn ChatBackend,
        verifier: &'a dyn Verifier,
        toolbox: &'a Toolbox,
        config: &'a LoopConfig,
    ) -> Self {
        Self {
            task,
            llm,
            verifier,
            toolbox,
            config,
            prompts: Prompts::default(),
            mode: RequirementMode::Full,
            checkpoints: None,
            stop: None,
            started: Instant::now(),
        }
    }

    pub fn with_prompts(mut self, prompts: Prompts) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_mode(mut self, mode: RequirementMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_checkpoints(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoints = Some(dir.into());
        self
    }

    pub fn with_stop(mut self, stop: &'a StopSignal) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn checkpoint_dir(&self) -> Option<&Path> {
        self.checkpoints.as_deref()
    }

    fn workdir(&self) -> &Path {
        self.toolbox.sandbox().root()
    }

    pub fn fresh_state(&self) -> RunState {
        RunState::new(self.task, self.mode)
    }

    fn checkpoint(&self, state: &RunState) -> Result<(), RefineError> {
        if let Some(dir) = &self.checkpoints {
            save_checkpoint(state, dir)?;
        }
        Ok(())
    }

    fn finish(&self, state: &mut RunState, kind: TerminationKind, detail: impl Into<String>) -> Result<(), RefineError> {
        let reason = TerminationReason::new(kind, detail);
        info!(task = %state.task_id, round = state.round, kind = %reason.kind, detail = %reason.detail, "run terminated");
        state.terminated = Some(reason);
        self.checkpoint(state)
    }

    fn requirement(&self) -> Result<&str, RefineError> {
        match self.mode {
            RequirementMode::Full => Ok(&self.task.requirement_full),
            RequirementMode::Summary => self
                .task
                .requirement_summary
                .as_deref()
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| RefineError::MissingSummary(self.task.task_id.clone())),
        }
    }

    /// Seeds the transcript and asks for the initial implementation `C_0`.
    /// No tools are offered in this round.
    pub fn coding_round(&self, state: &mut RunState) -> Result<PendingCandidate, RefineError> {
        let requirement = self.requirement()?;
        state.transcript.push(Message::system(&self.prompts.coding_system).with_meta(meta::ROUND, 0));
        state.transcript.push(
            Message::user(self.prompts.requirement(self.task, requirement))
                .with_meta(meta::ROUND, 0)
                .with_meta(meta::KIND, "requirement"),
        );
        state.llm_calls += 1;
        let completion = self.llm.complete(&state.transcript, &[])?;
        state.usage.push(completion.usage(Phase::Coding, 0));
        let reply = Message::assistant(completion.message.content).with_meta(meta::ROUND, 0);
        let code = extract_code(&reply.content);
        state.transcript.push(reply);
        let code = code.ok_or(RefineError::NoCodeBlock)?;
        Ok(PendingCandidate { round: 0, code })
    }

    /// One refinement round: feedback in, tool conversation, new code out.
    fn refine_round(&self, state: &mut RunState, t: u32, previous: &Candidate) -> RoundEnd {
        if t == 1 {
            state.transcript.push(Message::system(&self.prompts.refine_system).with_meta(meta::ROUND, 1));
        }
        let report = state.history.last().expect("verified before refining");
        let feedback = self.prompts.feedback(self.task, report, &previous.code);
        state.transcript.push(
            Message::user(feedback)
                .with_meta(meta::ROUND, t)
                .with_meta(meta::KIND, "feedback"),
        );

        let schemas: Vec<ToolSchema> = self.toolbox.schemas();
        let cap = self.config.tool_call_cap;
        let mut calls_used = 0u32;
        let mut last_code: Option<String> = None;
        loop {
            let view = prune_messages(&state.transcript, self.config.prune_keep_rounds);
            state.llm_calls += 1;
            let completion = match self.llm.complete(&view, &schemas) {
                Ok(c) => c,
                Err(e) => return RoundEnd::Stop(TerminationReason::new(TerminationKind::LlmError, e.to_string())),
            };
            state.usage.push(completion.usage(Phase::Refine, t));
            let reply = completion.message.with_meta(meta::ROUND, t);
            let code = extract_code(&reply.content);
            let calls = reply.tool_calls.clone();
            state.transcript.push(reply);

            if calls.is_empty() {
                return match code {
                    Some(code) => RoundEnd::Code { code, fresh: true },
                    None => RoundEnd::Stop(TerminationReason::new(
                        TerminationKind::EmptyOutput,
                        format!("round {t}: reply had neither code nor tool calls"),
                    )),
                };
            }
            if code.is_some() {
                last_code = code;
            }
            if calls_used + calls.len() as u32 > cap {
                for call in &calls {
                    state.transcript.push(
                        Message::tool(&call.id, self.prompts.tool_cap_reached(cap)).with_meta(meta::ROUND, t),
                    );
                }
                debug!(task = %state.task_id, round = t, "tool-call cap reached");
                return match last_code {
                    Some(code) => RoundEnd::Code { code, fresh: true },
                    None => RoundEnd::Code {
                        code: previous.code.clone(),
                        fresh: false,
                    },
                };
            }
            for call in &calls {
                let outcome = self.toolbox.dispatch(call);
                if outcome.failed {
                    state.tool_failures += 1;
                } else {
                    state.tool_failures = 0;
                }
                state.transcript.push(outcome.message.with_meta(meta::ROUND, t));
            }
            calls_used += calls.len() as u32;
            if state.tool_failures >= self.config.tool_failure_cap {
                return RoundEnd::Stop(TerminationReason::new(
                    TerminationKind::ToolFailureCap,
                    format!("{} consecutive failed tool calls", state.tool_failures),
                ));
            }
        }
    }

    /// Advances the run by one round and checkpoints. No-op once terminated.
    pub fn step(&self, state: &mut RunState) -> Result<(), RefineError> {
        if state.is_terminated() {
            return Ok(());
        }
        if state.transcript.is_empty() {
            self.task.validate()?;
            return match self.coding_round(state) {
                Ok(pending) => {
                    state.code_hashes.push(code_hash(&pending.code));
                    state.pending = Some(pending);
                    self.checkpoint(state)
                }
                Err(RefineError::Llm(e)) => self.finish(state, TerminationKind::LlmError, e.to_string()),
                Err(RefineError::NoCodeBlock) => {
                    self.finish(state, TerminationKind::EmptyOutput, "coding reply had no code block")
                }
                Err(e) => Err(e),
            };
        }

        let t = state.round + 1;
        let pending = state
            .pending
            .clone()
            .ok_or_else(|| RefineError::Io(format!("state of `{}` has no pending candidate", state.task_id)))?;
        if self.stop.is_some_and(|stop| stop()) {
            return self.finish(state, TerminationKind::OperatorStop, "stop requested");
        }
        if let Some(budget) = self.config.wall_clock_budget() {
            if self.started.elapsed() >= budget {
                return self.finish(state, TerminationKind::WallClock, format!("exceeded {}s", budget.as_secs()));
            }
        }

        write_candidate(self.workdir(), self.task, &pending.code)?;
        let report = self.verifier.verify(t, self.workdir(), self.task)?;
        let candidate = Candidate {
            round: pending.round,
            score: Score::from_feedback(&report.forge, &report.findings),
            code: pending.code,
        };
        update_best(&mut state.best, &candidate);
        state.candidates.push(candidate.clone());
        state.history.push(report);
        state.pending = None;
        let latest = state.history.last().expect("just pushed");
        debug!(task = %state.task_id, round = t, pass_rate = latest.forge.pass_rate(), "verified");

        if t > self.config.max_rounds {
            return if is_perfect(latest) {
                self.finish(state, TerminationKind::Success, "final candidate passes all tests")
            } else {
                self.finish(state, TerminationKind::MaxRounds, format!("{} rounds used", self.config.max_rounds))
            };
        }
        if is_perfect(latest) {
            return self.finish(state, TerminationKind::Success, format!("round {t}: all tests pass, no high findings"));
        }
        if is_stagnant(&state.history, self.config.stagnation_n) {
            return self.finish(
                state,
                TerminationKind::Stagnation,
                format!("no pass-rate improvement in {} rounds", self.config.stagnation_n),
            );
        }
        if let [.., previous, current] = state.history.as_slice() {
            if is_looping(current, previous, self.config.similarity_tau) {
                return self.finish(
                    state,
                    TerminationKind::Oscillation,
                    format!("feedback similarity above {}", self.config.similarity_tau),
                );
            }
        }
        if let Some(budget) = self.config.token_budget {
            if state.total_tokens() >= budget {
                return self.finish(
                    state,
                    TerminationKind::TokenBudget,
                    format!("{} of {budget} tokens used", state.total_tokens()),
                );
            }
        }

        match self.refine_round(state, t, &candidate) {
            RoundEnd::Stop(reason) => self.finish(state, reason.kind, reason.detail),
            RoundEnd::Code { code, fresh } => {
                state.round = t;
                if fresh {
                    let hash = code_hash(&code);
                    if state.code_hashes.contains(&hash) {
                        return self.finish(
                            state,
                            TerminationKind::CodeHashRepeat,
                            format!("round {t} repeated an earlier candidate"),
                        );
                    }
                    state.code_hashes.push(hash);
                }
                state.pending = Some(PendingCandidate { round: t, code });
                self.checkpoint(state)
            }
        }
    }

    /// Steps until the run terminates.
    pub fn run(&self, mut state: RunState) -> Result<RunState, RefineError> {
        self.config.validate().map_err(RefineError::Config)?;
        while !state.is_terminated() {
            self.step(&mut state)?;
        }
        Ok(state)
    }
}

/// Runs a task from scratch without checkpoints.
pub fn run_task(
    task: &BenchmarkTask,
    llm: &dyn ChatBackend,
    verifier: &dyn Verifier,
    toolbox: &Toolbox,
    config: &LoopConfig,
) -> Result<RunState, RefineError> {
    let refiner = Refiner::new(task, llm, verifier, toolbox, config);
    refiner.run(refiner.fresh_state())
}

/// Returns a stored terminal state untouched, continues from the latest
/// checkpoint, or starts fresh.
pub fn resume_or_run(refiner: &Refiner<'_>) -> Result<RunState, RefineError> {
    let loaded = match refiner.checkpoint_dir() {
        Some(dir) => load_checkpoint(&refiner.task.task_id, dir)?,
        None => None,
    };
    match loaded {
        Some(state) if state.is_terminated() => Ok(state),
        Some(state) => {
            info!(task = %state.task_id, round = state.round, "resuming from checkpoint");
            refiner.llm.restore(state.llm_calls);
            refiner.run(state)
        }
        None => refiner.run(refiner.fresh_state()),
    }
}
