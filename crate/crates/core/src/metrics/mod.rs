//! Evaluation statistics over finished runs: Pass@k, compilation rate,
//! gas and vulnerability comparisons, complexity and token accounting.

mod report;
mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{build_report, emit_report, ComplexityReport, EvalReport, PassReport, ReportFormat};
pub(crate) use report::thousands;
pub use stats::{mean, mean_std, pass_at_k, percentile, trimmed_mean, MeanStd};

use crate::analysis::source_metrics;
use crate::model::{
    FeedbackReport, ForgeFeedback, Phase, RunState, SeverityCounts, SlitherFinding, SourceMetrics, TokenUsage,
};
use crate::refine::{select_candidate, SelectionPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no compiled files")]
    NoCompiledFiles,
    #[error("baseline has no entry for task `{0}`")]
    MissingBaseline(String),
}

/// Evaluation inputs for one generated file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileResult {
    pub task_id: String,
    pub compiled: bool,
    pub total_tests: u32,
    pub passed_tests: u32,
    /// Gas of passed tests only.
    pub gas_by_test: BTreeMap<String, u64>,
    pub findings: SeverityCounts,
    pub source_metrics: SourceMetrics,
    #[serde(default)]
    pub usage: Vec<TokenUsage>,
}

impl FileResult {
    /// Builds a result from verifier output and source. `expected_tests`
    /// fixes the benchmark test count, so a file that fails to compile still
    /// counts its full suite as failed.
    pub fn from_feedback(
        task_id: &str,
        forge: &ForgeFeedback,
        findings: &[SlitherFinding],
        code: &str,
        expected_tests: Option<u32>,
    ) -> Self {
        Self {
            task_id: task_id.to_string(),
            compiled: forge.compiled,
            total_tests: forge.total_tests.max(expected_tests.unwrap_or(0)),
            passed_tests: forge.passed_tests,
            gas_by_test: forge.passed_gas(),
            findings: SeverityCounts::from_findings(findings),
            source_metrics: source_metrics(code),
            usage: Vec::new(),
        }
    }

    /// Result of a finished run under a selection policy. `None` when no
    /// candidate was ever verified.
    pub fn from_run(state: &RunState, policy: SelectionPolicy) -> Option<Self> {
        let candidate = select_candidate(state, policy)?;
        let report: &FeedbackReport = state.report_for(candidate)?;
        let mut result = Self::from_feedback(
            &state.task_id,
            &report.forge,
            &report.findings,
            &candidate.code,
            state.expected_tests,
        );
        result.usage = state.usage.clone();
        Some(result)
    }

    pub fn pass_rate(&self) -> f64 {
        if self.total_tests == 0 {
            0.0
        } else {
            f64::from(self.passed_tests) / f64::from(self.total_tests)
        }
    }
}

pub fn compile_rate(results: &[FileResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty("compile_rate"));
    }
    let compiled = results.iter().filter(|r| r.compiled).count();
    Ok(compiled as f64 / results.len() as f64)
}

/// Passed tests over all tests of all files, compiled or not.
pub fn overall_pass1(results: &[FileResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty("overall_pass1"));
    }
    let passed: u64 = results.iter().map(|r| u64::from(r.passed_tests)).sum();
    let total: u64 = results.iter().map(|r| u64::from(r.total_tests)).sum();
    Ok(if total == 0 { 0.0 } else { passed as f64 / total as f64 })
}

/// Mean and population std of per-file pass rates over compiled files.
pub fn per_file_pass1_stats(results: &[FileResult]) -> Result<MeanStd, MetricsError> {
    let rates: Vec<f64> = results.iter().filter(|r| r.compiled).map(FileResult::pass_rate).collect();
    if rates.is_empty() {
        return Err(MetricsError::NoCompiledFiles);
    }
    mean_std(&rates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasComparison {
    pub common_tests: usize,
    pub mean_ratio: Option<f64>,
    pub trimmed_mean_5: Option<f64>,
    pub p90: Option<f64>,
    pub file_count: usize,
    pub files_better: usize,
    pub files_worse: usize,
}

/// Compares gas over tests that passed on both sides. Ratios are ours over
/// theirs, pooled across files; tests where theirs used zero gas are
/// skipped since the ratio is undefined.
pub fn gas_pairwise(ours: &[FileResult], theirs: &[FileResult]) -> GasComparison {
    let theirs: BTreeMap<&str, &FileResult> = theirs.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let mut ours_sorted: Vec<&FileResult> = ours.iter().collect();
    ours_sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let mut ratios = Vec::new();
    let (mut file_count, mut better, mut worse) = (0, 0, 0);
    for mine in ours_sorted {
        let Some(other) = theirs.get(mine.task_id.as_str()) else { continue };
        let (mut my_total, mut their_total) = (0u128, 0u128);
        let mut common = 0;
        for (test, &my_gas) in &mine.gas_by_test {
            let Some(&their_gas) = other.gas_by_test.get(test) else { continue };
            if their_gas == 0 {
                continue;
            }
            common += 1;
            ratios.push(my_gas as f64 / their_gas as f64);
            my_total += u128::from(my_gas);
            their_total += u128::from(their_gas);
        }
        if common == 0 {
            continue;
        }
        file_count += 1;
        if my_total < their_total {
            better += 1;
        } else if my_total > their_total {
            worse += 1;
        }
    }
    GasComparison {
        common_tests: ratios.len(),
        mean_ratio: mean(&ratios).ok(),
        trimmed_mean_5: trimmed_mean(&ratios, 0.05).ok(),
        p90: percentile(&ratios, 90.0).ok(),
        file_count,
        files_better: better,
        files_worse: worse,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnComparison {
    pub common_files: usize,
    pub baseline_vuln: u64,
    pub method_vuln: u64,
    pub delta_pct: Option<f64>,
    pub vuln_diff: i64,
}

impl VulnComparison {
    pub fn from_totals(common_files: usize, baseline_vuln: u64, method_vuln: u64) -> Self {
        let vuln_diff = method_vuln as i64 - baseline_vuln as i64;
        Self {
            common_files,
            baseline_vuln,
            method_vuln,
            delta_pct: (baseline_vuln > 0).then(|| 100.0 * vuln_diff as f64 / baseline_vuln as f64),
            vuln_diff,
        }
    }
}

/// High+Medium+Low totals over the files the method compiled.
pub fn vuln_compare(method: &[FileResult], baseline: &[FileResult]) -> Result<VulnComparison, MetricsError> {
    let baseline: BTreeMap<&str, &FileResult> = baseline.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let (mut files, mut base_total, mut method_total) = (0, 0u64, 0u64);
    for result in method.iter().filter(|r| r.compiled) {
        let base = baseline
            .get(result.task_id.as_str())
            .ok_or_else(|| MetricsError::MissingBaseline(result.task_id.clone()))?;
        files += 1;
        base_total += u64::from(base.findings.total());
        method_total += u64::from(result.findings.total());
    }
    Ok(VulnComparison::from_totals(files, base_total, method_total))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenReport {
    pub coding_prompt: u64,
    pub coding_completion: u64,
    pub refine_prompt: u64,
    pub refine_completion: u64,
    pub total_prompt: u64,
    pub total_completion: u64,
    pub compiled_files: usize,
    /// Distinct (task, round) pairs with refine usage.
    pub refine_rounds: usize,
    pub avg_coding_prompt_per_file: Option<f64>,
    pub avg_coding_completion_per_file: Option<f64>,
    pub avg_total_prompt_per_file: Option<f64>,
    pub avg_total_completion_per_file: Option<f64>,
    pub avg_prompt_per_round: Option<f64>,
    pub avg_completion_per_round: Option<f64>,
}

/// Token totals over all files; per-file averages divide by the number of
/// compiled files, per-round averages by the number of refine rounds.
pub fn token_report(results: &[FileResult]) -> TokenReport {
    let mut report = TokenReport::default();
    let mut rounds = BTreeSet::new();
    for result in results {
        for usage in &result.usage {
            match usage.phase {
                Phase::Coding => {
                    report.coding_prompt += usage.prompt_tokens;
                    report.coding_completion += usage.completion_tokens;
                }
                Phase::Refine => {
                    report.refine_prompt += usage.prompt_tokens;
                    report.refine_completion += usage.completion_tokens;
                    rounds.insert((result.task_id.as_str(), usage.round));
                }
            }
        }
    }
    report.total_prompt = report.coding_prompt + report.refine_prompt;
    report.total_completion = report.coding_completion + report.refine_completion;
    report.compiled_files = results.iter().filter(|r| r.compiled).count();
    report.refine_rounds = rounds.len();
    let per = |value: u64, count: usize| (count > 0).then(|| value as f64 / count as f64);
    report.avg_coding_prompt_per_file = per(report.coding_prompt, report.compiled_files);
    report.avg_coding_completion_per_file = per(report.coding_completion, report.compiled_files);
    report.avg_total_prompt_per_file = per(report.total_prompt, report.compiled_files);
    report.avg_total_completion_per_file = per(report.total_completion, report.compiled_files);
    report.avg_prompt_per_round = per(report.refine_prompt, report.refine_rounds);
    report.avg_completion_per_round = per(report.refine_completion, report.refine_rounds);
    report
}
