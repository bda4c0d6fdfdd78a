use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{aggregate, Verifier, VerifyError};
use crate::model::{BenchmarkTask, FeedbackReport, ForgeFeedback, Location, Severity, SlitherFinding, TestFailure};

/// Scripted verifier output for one candidate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FakeRound {
    pub forge: ForgeFeedback,
    #[serde(default)]
    pub findings: Vec<SlitherFinding>,
}

impl FakeRound {
    /// `passed` of `total` tests pass; each passing test costs `gas`.
    pub fn tests(passed: u32, total: u32) -> Self {
        assert!(passed <= total, "passed exceeds total");
        let failures = (passed..total)
            .map(|i| TestFailure {
                test_name: format!("Suite::test_{i}"),
                assertion_message: format!("assertion {i} failed"),
                trace_excerpt: String::new(),
            })
            .collect();
        let gas_by_test: BTreeMap<String, u64> = (0..passed).map(|i| (format!("Suite::test_{i}"), 30_000)).collect();
        Self {
            forge: ForgeFeedback {
                compiled: true,
                total_tests: total,
                passed_tests: passed,
                failures,
                gas_by_test,
            },
            findings: Vec::new(),
        }
    }

    pub fn compile_error(diagnostics: &str) -> Self {
        Self {
            forge: ForgeFeedback::compile_failure(diagnostics),
            findings: Vec::new(),
        }
    }

    pub fn with_gas(mut self, gas: u64) -> Self {
        for value in self.forge.gas_by_test.values_mut() {
            *value = gas;
        }
        self
    }

    pub fn with_finding(mut self, severity: Severity, detector: &str, line: u32) -> Self {
        self.findings.push(SlitherFinding {
            detector_id: detector.to_string(),
            severity,
            description: format!("{detector} detected"),
            location: Location {
                file: "src/Target.sol".into(),
                line,
            },
        });
        self
    }
}

/// In-process verifier replaying a script keyed by candidate round
/// (report round minus one). The last entry repeats once the script runs out.
#[derive(Debug, Default)]
pub struct FakeVerifier {
    script: Vec<FakeRound>,
    current: Mutex<usize>,
    calls: AtomicUsize,
}

impl FakeVerifier {
    pub fn new(script: Vec<FakeRound>) -> Self {
        assert!(!script.is_empty(), "fake verifier needs at least one round");
        Self {
            script,
            current: Mutex::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `verify` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn entry(&self) -> &FakeRound {
        let idx = *self.current.lock().unwrap();
        &self.script[idx.min(self.script.len() - 1)]
    }
}

impl Verifier for FakeVerifier {
    fn run_forge(&self, _workdir: &Path, _task: &BenchmarkTask) -> Result<ForgeFeedback, VerifyError> {
        Ok(self.entry().forge.clone())
    }

    fn run_slither(&self, _workdir: &Path, task: &BenchmarkTask) -> Result<Vec<SlitherFinding>, VerifyError> {
        let target = crate::model::slash_path(&task.target_file);
        Ok(self
            .entry()
            .findings
            .iter()
            .cloned()
            .map(|mut f| {
                f.location.file = target.clone();
                f
            })
            .collect())
    }

    fn verify(&self, round: u32, workdir: &Path, task: &BenchmarkTask) -> Result<FeedbackReport, VerifyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self.current.lock().unwrap() = round.saturating_sub(1) as usize;
        let forge = self.run_forge(workdir, task)?;
        let findings = self.run_slither(workdir, task)?;
        Ok(aggregate(round, forge, findings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn task() -> BenchmarkTask {
        serde_json::from_value(serde_json::json!({
            "task_id": "t",
            "repo_root": "/tmp",
            "target_file": "src/King.sol",
            "requirement_full": "x",
        }))
        .unwrap()
    }

    #[test]
    fn keyed_by_candidate_round_and_repeats_last() {
        let v = FakeVerifier::new(vec![FakeRound::compile_error("boom"), FakeRound::tests(3, 3)]);
        let dir = PathBuf::from("/tmp");
        assert!(!v.verify(1, &dir, &task()).unwrap().forge.compiled);
        assert_eq!(v.verify(2, &dir, &task()).unwrap().forge.passed_tests, 3);
        assert_eq!(v.verify(9, &dir, &task()).unwrap().forge.passed_tests, 3);
        assert_eq!(v.calls(), 3);
    }

    #[test]
    fn scripted_rounds_validate() {
        for round in [FakeRound::tests(2, 3), FakeRound::tests(0, 0), FakeRound::compile_error("x")] {
            assert!(round.forge.validate().is_ok());
        }
        let r = FakeRound::tests(1, 2).with_finding(Severity::High, "reentrancy-eth", 7);
        let report = FakeVerifier::new(vec![r]).verify(1, Path::new("/tmp"), &task()).unwrap();
        assert_eq!(report.findings[0].location.file, "src/King.sol");
    }
}
