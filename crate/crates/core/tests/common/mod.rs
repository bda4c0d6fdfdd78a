#![allow(dead_code)]

pub mod complexity;
pub mod datasets;
pub mod sandbox;
pub mod scenarios;

use std::path::{Path, PathBuf};

use solrefine_core::llm::{ScriptedBackend, ScriptedReply};
use solrefine_core::model::{BenchmarkTask, RunState, TestFailure};
use solrefine_core::refine::{prepare_workdir, LoopConfig, Refiner};
use solrefine_core::toolbox::{SandboxPolicy, Toolbox};
use solrefine_core::verify::{FakeRound, FakeVerifier};
use tempfile::TempDir;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn king_task() -> BenchmarkTask {
    serde_json::from_value(serde_json::json!({
        "task_id": "king-claim-throne",
        "repo_root": fixtures().join("king"),
        "target_file": "src/King.sol",
        "requirement_full": "Implement `King`. Anyone may call claimThrone with more ether than the current prize; \
the caller becomes king, the prize becomes the payment, and the previous king receives the payment.",
        "test_suite_filter": "KingTest",
        "deny_patterns": ["test/**", "test", "reference/**", "reference"],
        "reference_solution": "reference/King.sol",
        "expected_tests": 3
    }))
    .unwrap()
}

/// Distinct code for each index so no candidate repeats.
pub fn code(i: usize) -> String {
    format!("pragma solidity ^0.8.24;\ncontract King {{ uint256 public version = {i}; }}")
}

pub fn codes(n: usize) -> Vec<ScriptedReply> {
    (0..n).map(|i| ScriptedReply::code(&code(i))).collect()
}

/// `passed` of `total` with failure messages unique to `salt`, so feedback
/// of two rounds with equal pass rates is not near-identical.
pub fn distinct(passed: u32, total: u32, salt: &str) -> FakeRound {
    let mut round = FakeRound::tests(passed, total);
    for (k, failure) in round.forge.failures.iter_mut().enumerate() {
        *failure = TestFailure {
            test_name: format!("{salt}Suite::{salt}_case_{k}"),
            assertion_message: format!("{salt}: expected balance {} but observed {}", k * 7 + 3, salt.len() * 13 + k),
            trace_excerpt: format!("{salt} trace {salt} {salt}"),
        };
    }
    round
}

/// A private working copy plus a toolbox rooted in it.
pub struct Workspace {
    pub dir: TempDir,
    pub toolbox: Toolbox,
}

impl Workspace {
    pub fn new(task: &BenchmarkTask) -> Self {
        let dir = TempDir::new().unwrap();
        let work = prepare_workdir(task, &dir.path().join("work")).unwrap();
        let toolbox = Toolbox::new(&SandboxPolicy::new(work, task.deny_patterns.clone())).unwrap();
        Self { dir, toolbox }
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.dir.path().join("checkpoints")
    }
}

pub struct Outcome {
    pub state: RunState,
    pub llm_calls: usize,
    pub verifier_calls: usize,
}

pub fn run_scripted(script: Vec<ScriptedReply>, rounds: Vec<FakeRound>, config: &LoopConfig) -> Outcome {
    let task = king_task();
    let ws = Workspace::new(&task);
    let llm = ScriptedBackend::new(script);
    let verifier = FakeVerifier::new(rounds);
    let refiner = Refiner::new(&task, &llm, &verifier, &ws.toolbox, config);
    let state = refiner.run(refiner.fresh_state()).unwrap();
    Outcome {
        state,
        llm_calls: llm.calls(),
        verifier_calls: verifier.calls(),
    }
}
