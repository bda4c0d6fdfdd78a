//! External verifiers (test runner and static analyzer), feedback
//! aggregation, and a scripted in-process verifier for tests.

mod fake;
mod forge;
mod process;
mod slither;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

pub use fake::{FakeRound, FakeVerifier};
pub use process::binary_available;

use crate::model::{BenchmarkTask, FeedbackReport, ForgeFeedback, SlitherFinding};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("verifier binary `{0}` not found")]
    ToolMissing(String),
    #[error("could not parse verifier output: {0}")]
    Unparseable(String),
    #[error("analyzer failed: {0}")]
    Crash(String),
    #[error("verifier i/o error: {0}")]
    Io(String),
}

fn default_forge() -> String {
    "forge".into()
}

fn default_slither() -> String {
    "slither".into()
}

fn default_timeout() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    #[serde(default = "default_forge")]
    pub forge_binary: String,
    #[serde(default = "default_slither")]
    pub slither_binary: String,
    #[serde(default = "default_timeout")]
    pub per_tool_timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solc_version_hint: Option<String>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            forge_binary: default_forge(),
            slither_binary: default_slither(),
            per_tool_timeout_secs: default_timeout(),
            solc_version_hint: None,
        }
    }
}

impl VerifierConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.per_tool_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.per_tool_timeout_secs == 0 {
            return Err("per_tool_timeout_secs must be positive".into());
        }
        Ok(())
    }
}

/// Test runner plus static analyzer behind one interface.
pub trait Verifier: Send + Sync {
    fn run_forge(&self, workdir: &Path, task: &BenchmarkTask) -> Result<ForgeFeedback, VerifyError>;

    fn run_slither(&self, workdir: &Path, task: &BenchmarkTask) -> Result<Vec<SlitherFinding>, VerifyError>;

    /// Runs both tools and aggregates feedback for `round`. Only a missing
    /// tool or an I/O failure is an error; everything else degrades into the
    /// report.
    fn verify(&self, round: u32, workdir: &Path, task: &BenchmarkTask) -> Result<FeedbackReport, VerifyError> {
        let mut warnings = Vec::new();
        let forge = match self.run_forge(workdir, task) {
            Ok(fb) => fb,
            Err(VerifyError::Unparseable(msg)) => {
                warnings.push(format!("test output unparseable: {msg}"));
                ForgeFeedback::compile_failure(format!("unparseable test output: {msg}"))
            }
            Err(e) => return Err(e),
        };
        let findings = match self.run_slither(workdir, task) {
            Ok(findings) => findings,
            Err(e @ (VerifyError::Crash(_) | VerifyError::Unparseable(_))) => {
                warn!(task = %task.task_id, error = %e, "static analysis failed");
                warnings.push(e.to_string());
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        let mut report = aggregate(round, forge, findings);
        if !warnings.is_empty() {
            report.rendered_text.push_str("warnings:\n");
            for w in &warnings {
                let _ = writeln!(report.rendered_text, "- {w}");
            }
            report.warnings = warnings;
        }
        Ok(report)
    }
}

/// Parses captured `forge test --json` output.
pub fn parse_forge_test_output(stdout: &str) -> Result<ForgeFeedback, VerifyError> {
    let payload = forge::parse_json_payload(stdout)
        .ok_or_else(|| VerifyError::Unparseable("no JSON object in test output".into()))?;
    forge::parse_test_output(&payload)
}

/// Parses captured `slither --json -` output, keeping findings on `target`.
pub fn parse_slither_output(stdout: &str, target: &str) -> Result<Vec<SlitherFinding>, VerifyError> {
    let payload = forge::parse_json_payload(stdout)
        .ok_or_else(|| VerifyError::Unparseable("no JSON object in analyzer output".into()))?;
    slither::parse_findings(&payload, target)
}

/// Runs the real `forge` and `slither` binaries.
#[derive(Debug, Clone, Default)]
pub struct ToolchainVerifier {
    pub config: VerifierConfig,
}

impl ToolchainVerifier {
    pub fn new(config: VerifierConfig) -> Self {
        Self { config }
    }

    pub fn missing_tools(&self) -> Vec<String> {
        [&self.config.forge_binary, &self.config.slither_binary]
            .into_iter()
            .filter(|bin| !binary_available(bin))
            .cloned()
            .collect()
    }
}

impl Verifier for ToolchainVerifier {
    fn run_forge(&self, workdir: &Path, task: &BenchmarkTask) -> Result<ForgeFeedback, VerifyError> {
        forge::run_forge(workdir, task, &self.config)
    }

    fn run_slither(&self, workdir: &Path, task: &BenchmarkTask) -> Result<Vec<SlitherFinding>, VerifyError> {
        slither::run_slither(workdir, task, &self.config)
    }
}

fn indented(out: &mut String, text: &str) {
    for line in text.lines() {
        let _ = writeln!(out, "    {line}");
    }
}

/// Renders verifier output into the canonical feedback text.
///
/// Order is fixed: summary line, compile status, pass ratio, failures,
/// findings, then gas of passed tests.
pub fn aggregate(round: u32, forge: ForgeFeedback, mut findings: Vec<SlitherFinding>) -> FeedbackReport {
    findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let counts = crate::model::SeverityCounts::from_findings(&findings);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Verification feedback for round {round}: passed {}/{}, findings high {} medium {} low {}",
        forge.passed_tests, forge.total_tests, counts.high, counts.medium, counts.low
    );
    if forge.compiled {
        out.push_str("compile: success\n");
    } else {
        out.push_str("compile: FAILED\n");
    }
    let _ = write!(out, "passed: {}/{}", forge.passed_tests, forge.total_tests);
    if forge.compiled && forge.total_tests > 0 && forge.passed_tests == forge.total_tests {
        out.push_str(" (all tests pass)");
    }
    out.push('\n');

    if forge.compiled {
        if !forge.failures.is_empty() {
            let _ = writeln!(out, "failures ({}):", forge.failures.len());
            for failure in &forge.failures {
                let _ = writeln!(out, "- {}: {}", failure.test_name, failure.assertion_message);
                indented(&mut out, &failure.trace_excerpt);
            }
        }
    } else {
        out.push_str("compiler diagnostics:\n");
        for failure in &forge.failures {
            indented(&mut out, &failure.assertion_message);
        }
    }

    if findings.is_empty() {
        out.push_str("findings: none\n");
    } else {
        let _ = writeln!(out, "findings ({}):", findings.len());
        for f in &findings {
            let _ = writeln!(
                out,
                "- {} {} {}:{} {}",
                f.severity.label(),
                f.detector_id,
                f.location.file,
                f.location.line,
                f.description
            );
        }
    }

    let gas = forge.passed_gas();
    if !gas.is_empty() {
        out.push_str("gas (passed tests):\n");
        for (test, used) in &gas {
            let _ = writeln!(out, "- {test}: {used}");
        }
    }

    FeedbackReport {
        round,
        forge,
        findings,
        rendered_text: out,
        warnings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Location, Severity, TestFailure};

    fn passing(total: u32) -> ForgeFeedback {
        ForgeFeedback {
            compiled: true,
            total_tests: total,
            passed_tests: total,
            ..Default::default()
        }
    }

    #[test]
    fn full_pass_no_findings() {
        let report = aggregate(1, passing(3), vec![]);
        assert!(report.rendered_text.contains("passed: 3/3 (all tests pass)"));
        assert!(report.rendered_text.contains("findings: none"));
        assert_eq!(report.rendered_text, aggregate(1, passing(3), vec![]).rendered_text);
    }

    #[test]
    fn failures_precede_findings() {
        let mut forge = passing(3);
        forge.passed_tests = 2;
        forge.failures.push(TestFailure {
            test_name: "KingTest::test_prize".into(),
            assertion_message: "prize not updated".into(),
            trace_excerpt: String::new(),
        });
        let finding = SlitherFinding {
            detector_id: "reentrancy-eth".into(),
            severity: Severity::High,
            description: "Reentrancy in King.claimThrone()".into(),
            location: Location {
                file: "src/King.sol".into(),
                line: 14,
            },
        };
        let text = aggregate(2, forge, vec![finding]).rendered_text;
        let fail_at = text.find("- KingTest::test_prize: prize not updated").unwrap();
        let find_at = text.find("- HIGH reentrancy-eth src/King.sol:14 Reentrancy in King.claimThrone()").unwrap();
        assert!(text.find("compile: success").unwrap() < text.find("passed: 2/3").unwrap());
        assert!(text.find("passed: 2/3").unwrap() < fail_at);
        assert!(fail_at < find_at);
    }

    #[test]
    fn compile_failure_renders_diagnostics() {
        let text = aggregate(1, ForgeFeedback::compile_failure("ParserError: expected ';'"), vec![]).rendered_text;
        assert!(text.contains("compile: FAILED"));
        assert!(text.contains("passed: 0/0"));
        assert!(text.contains("    ParserError: expected ';'"));
    }
}
