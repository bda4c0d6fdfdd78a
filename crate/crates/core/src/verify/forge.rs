use std::path::Path;

use serde_json::Value;

use super::process::{self, ProcessError};
use super::{VerifierConfig, VerifyError};
use crate::model::{BenchmarkTask, ForgeFeedback, TestFailure};

const TRACE_LINES: usize = 20;
const DIAGNOSTIC_CHARS: usize = 4000;

fn tail(text: &str, max_chars: usize) -> String {
    let count = text.chars().count();
    text.chars().skip(count.saturating_sub(max_chars)).collect()
}

/// Parses the first JSON object in `stdout`. Some toolchain versions print
/// progress lines before the payload.
pub(crate) fn parse_json_payload(stdout: &str) -> Option<Value> {
    if let Ok(value) = serde_json::from_str::<Value>(stdout.trim()) {
        return Some(value);
    }
    stdout
        .match_indices('{')
        .filter(|(i, _)| *i == 0 || stdout.as_bytes()[i - 1] == b'\n')
        .find_map(|(i, _)| serde_json::from_str::<Value>(stdout[i..].trim()).ok())
}

/// Compile errors from `forge build --json`, or `None` when the build succeeded.
pub(crate) fn build_errors(payload: &Value) -> Option<String> {
    let errors = payload.get("errors")?.as_array()?;
    let fatal: Vec<String> = errors
        .iter()
        .filter(|e| e.get("severity").and_then(Value::as_str) == Some("error"))
        .map(|e| {
            e.get("formattedMessage")
                .or_else(|| e.get("message"))
                .and_then(Value::as_str)
                .unwrap_or("compiler error")
                .trim()
                .to_string()
        })
        .collect();
    (!fatal.is_empty()).then(|| fatal.join("\n"))
}

fn test_gas(result: &Value) -> Option<u64> {
    let kind = result.get("kind")?;
    kind.pointer("/Unit/gas")
        .or_else(|| kind.pointer("/Fuzz/mean_gas"))
        .and_then(Value::as_u64)
}

fn trace_excerpt(result: &Value) -> String {
    result
        .get("decoded_logs")
        .and_then(Value::as_array)
        .map(|logs| {
            logs.iter()
                .filter_map(Value::as_str)
                .take(TRACE_LINES)
                .collect::<Vec<_>>()
                .join("\n")
        })
        .unwrap_or_default()
}

/// Converts the `forge test --json` payload into feedback.
pub(crate) fn parse_test_output(payload: &Value) -> Result<ForgeFeedback, VerifyError> {
    let suites = payload
        .as_object()
        .ok_or_else(|| VerifyError::Unparseable("test output is not an object".into()))?;
    let mut feedback = ForgeFeedback {
        compiled: true,
        ..Default::default()
    };
    for (suite_key, suite) in suites {
        let contract = suite_key.rsplit(':').next().unwrap_or(suite_key);
        let Some(results) = suite.get("test_results").and_then(Value::as_object) else {
            return Err(VerifyError::Unparseable(format!("suite `{suite_key}` has no test_results")));
        };
        for (signature, result) in results {
            let name = format!("{contract}::{}", signature.split('(').next().unwrap_or(signature));
            let status = result.get("status").and_then(Value::as_str).unwrap_or("");
            match status {
                "Success" => feedback.passed_tests += 1,
                "Failure" => feedback.failures.push(TestFailure {
                    test_name: name.clone(),
                    assertion_message: result
                        .get("reason")
                        .and_then(Value::as_str)
                        .unwrap_or("test failed")
                        .to_string(),
                    trace_excerpt: trace_excerpt(result),
                }),
                "Skipped" => continue,
                other => {
                    return Err(VerifyError::Unparseable(format!(
                        "unknown status `{other}` for `{name}`"
                    )))
                }
            }
            feedback.total_tests += 1;
            if let Some(gas) = test_gas(result) {
                feedback.gas_by_test.insert(name, gas);
            }
        }
    }
    feedback.failures.sort_by(|a, b| a.test_name.cmp(&b.test_name));
    Ok(feedback)
}

/// Forge selection flags for a suite filter: paths use `--match-path`,
/// anything else names a test contract.
fn filter_args(filter: &str) -> Vec<String> {
    let filter = filter.trim();
    if filter.is_empty() {
        Vec::new()
    } else if filter.contains('/') || filter.ends_with(".sol") {
        vec!["--match-path".into(), filter.into()]
    } else {
        vec!["--match-contract".into(), filter.into()]
    }
}

fn map_process(err: ProcessError) -> Result<ForgeFeedback, VerifyError> {
    match err {
        ProcessError::Missing(bin) => Err(VerifyError::ToolMissing(bin)),
        ProcessError::Timeout => Ok(ForgeFeedback::compile_failure("verifier timeout")),
        ProcessError::Io(e) => Err(VerifyError::Io(e.to_string())),
    }
}

pub(crate) fn run_forge(workdir: &Path, task: &BenchmarkTask, cfg: &VerifierConfig) -> Result<ForgeFeedback, VerifyError> {
    let mut common = Vec::new();
    if let Some(version) = &cfg.solc_version_hint {
        common.extend(["--use".to_string(), version.clone()]);
    }
    let mut build_args = vec!["build".to_string(), "--json".to_string()];
    build_args.extend(common.iter().cloned());
    let build = match process::run(&cfg.forge_binary, &build_args, workdir, &[], cfg.timeout()) {
        Ok(out) => out,
        Err(e) => return map_process(e),
    };
    let build_failed = match parse_json_payload(&build.stdout) {
        Some(payload) => build_errors(&payload),
        None if build.success => None,
        None => Some(format!("{}\n{}", build.stdout, build.stderr).trim().to_string()),
    };
    if let Some(diagnostics) = build_failed {
        return Ok(ForgeFeedback::compile_failure(tail(&diagnostics, DIAGNOSTIC_CHARS)));
    }

    let mut test_args = vec!["test".to_string(), "--json".to_string()];
    test_args.extend(common);
    test_args.extend(filter_args(&task.test_suite_filter));
    let test = match process::run(&cfg.forge_binary, &test_args, workdir, &[], cfg.timeout()) {
        Ok(out) => out,
        Err(e) => return map_process(e),
    };
    match parse_json_payload(&test.stdout) {
        Some(payload) => {
            if let Some(diagnostics) = build_errors(&payload) {
                return Ok(ForgeFeedback::compile_failure(tail(&diagnostics, DIAGNOSTIC_CHARS)));
            }
            parse_test_output(&payload)
        }
        // No payload and a failing exit: the test build broke.
        None if !test.success => Ok(ForgeFeedback::compile_failure(tail(
            format!("{}\n{}", test.stdout, test.stderr).trim(),
            DIAGNOSTIC_CHARS,
        ))),
        None => Err(VerifyError::Unparseable(tail(&test.stdout, 500))),
    }
}
