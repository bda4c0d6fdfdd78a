use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    compile_rate, gas_pairwise, overall_pass1, per_file_pass1_stats, token_report, vuln_compare, FileResult,
    GasComparison, MeanStd, MetricsError, TokenReport, VulnComparison,
};
use crate::refine::SelectionPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub files: usize,
    pub compiled: usize,
    pub compile_rate: Option<f64>,
    pub passed_tests: u64,
    pub total_tests: u64,
    pub pass1: Option<f64>,
    pub per_file: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub files: usize,
    pub loc: u64,
    pub avg_loc: Option<f64>,
    pub ploc: u64,
    pub avg_ploc: Option<f64>,
    pub complexity: u64,
    pub avg_complexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub policy: SelectionPolicy,
    pub pass: PassReport,
    pub complexity: ComplexityReport,
    pub tokens: TokenReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas: Option<GasComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vuln: Option<VulnComparison>,
    /// Sorted by task id.
    pub files: Vec<FileResult>,
}

/// Computes every statistic for `results`, comparing against `baseline`
/// when given. Complexity covers compiled files only.
pub fn build_report(
    label: &str,
    policy: SelectionPolicy,
    mut results: Vec<FileResult>,
    baseline: Option<&[FileResult]>,
) -> Result<EvalReport, MetricsError> {
    results.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let compiled: Vec<&FileResult> = results.iter().filter(|r| r.compiled).collect();
    let pass = PassReport {
        files: results.len(),
        compiled: compiled.len(),
        compile_rate: compile_rate(&results).ok(),
        passed_tests: results.iter().map(|r| u64::from(r.passed_tests)).sum(),
        total_tests: results.iter().map(|r| u64::from(r.total_tests)).sum(),
        pass1: overall_pass1(&results).ok(),
        per_file: per_file_pass1_stats(&results).ok(),
    };
    let sum = |f: fn(&FileResult) -> u32| compiled.iter().map(|r| u64::from(f(r))).sum::<u64>();
    let avg = |total: u64| (!compiled.is_empty()).then(|| total as f64 / compiled.len() as f64);
    let (loc, ploc, complexity) = (
        sum(|r| r.source_metrics.loc),
        sum(|r| r.source_metrics.ploc),
        sum(|r| r.source_metrics.complexity),
    );
    let complexity = ComplexityReport {
        files: compiled.len(),
        loc,
        avg_loc: avg(loc),
        ploc,
        avg_ploc: avg(ploc),
        complexity,
        avg_complexity: avg(complexity),
    };
    let (gas, vuln) = match baseline {
        Some(base) => (Some(gas_pairwise(&results, base)), Some(vuln_compare(&results, base)?)),
        None => (None, None),
    };
    Ok(EvalReport {
        label: label.to_string(),
        policy,
        pass,
        complexity,
        tokens: token_report(&results),
        gas,
        vuln,
        files: results,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{:.2}%", 100.0 * v))
}

fn signed_pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:+.2}%"))
}

fn ratio(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

fn one_decimal(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.1}"))
}

pub(crate) fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn rounded(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| thousands(v.round() as u64))
}

fn table(out: &mut String, headers: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", headers.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(headers.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

fn markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    let label = report.label.clone();
    let has_files = !report.files.is_empty();
    let _ = writeln!(out, "# Evaluation: {label}\n");

    out.push_str("## Functional correctness\n\n");
    let p = &report.pass;
    let rows = if has_files {
        vec![vec![
            label.clone(),
            format!("{}/{}", p.compiled, p.files),
            pct(p.compile_rate),
            p.passed_tests.to_string(),
            pct(p.pass1),
            p.per_file
                .map_or("-".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std)),
        ]]
    } else {
        Vec::new()
    };
    table(
        &mut out,
        &["Method", "Files", "Compile Rate", "Passed Tests", "Pass@1", "Pass@1 (Mean±Std)"],
        &rows,
    );

    out.push_str("## Gas efficiency\n\n");
    let rows = match (&report.gas, has_files) {
        (Some(g), true) => vec![vec![
            label.clone(),
            g.common_tests.to_string(),
            ratio(g.mean_ratio),
            ratio(g.trimmed_mean_5),
            ratio(g.p90),
            g.file_count.to_string(),
            g.files_better.to_string(),
            g.files_worse.to_string(),
        ]],
        _ => Vec::new(),
    };
    table(
        &mut out,
        &["Method", "# Common", "Mean Ratio", "Trim5%", "P90", "# Files", "Better", "Worse"],
        &rows,
    );

    out.push_str("## Vulnerabilities\n\n");
    let rows = match (&report.vuln, has_files) {
        (Some(v), true) => vec![vec![
            label.clone(),
            v.common_files.to_string(),
            v.baseline_vuln.to_string(),
            v.method_vuln.to_string(),
            signed_pct(v.delta_pct),
            format!("{:+}", v.vuln_diff),
        ]],
        _ => Vec::new(),
    };
    table(
        &mut out,
        &["Method", "# Common Files", "Baseline Vuln", "Method Vuln", "Δ% vs Base", "Vuln Diff"],
        &rows,
    );

    out.push_str("## Code complexity\n\n");
    let c = &report.complexity;
    let rows = if has_files {
        vec![vec![
            label.clone(),
            c.files.to_string(),
            c.loc.to_string(),
            one_decimal(c.avg_loc),
            c.ploc.to_string(),
            one_decimal(c.avg_ploc),
            c.complexity.to_string(),
            one_decimal(c.avg_complexity),
        ]]
    } else {
        Vec::new()
    };
    table(
        &mut out,
        &["Method", "Files", "LOC", "Avg LOC", "PLOC", "Avg PLOC", "Complexity", "Avg Complexity"],
        &rows,
    );

    out.push_str("## Token consumption\n\n");
    let t = &report.tokens;
    let rows = if has_files {
        vec![vec![
            label.clone(),
            thousands(t.coding_prompt),
            thousands(t.coding_completion),
            thousands(t.refine_prompt),
            thousands(t.refine_completion),
            thousands(t.total_prompt),
            thousands(t.total_completion),
        ]]
    } else {
        Vec::new()
    };
    table(
        &mut out,
        &[
            "Method",
            "Coding Prompt",
            "Coding Completion",
            "Refine Prompt",
            "Refine Completion",
            "Total Prompt",
            "Total Completion",
        ],
        &rows,
    );
    let rows = if has_files {
        vec![vec![
            label.clone(),
            rounded(t.avg_coding_prompt_per_file),
            rounded(t.avg_coding_completion_per_file),
            rounded(t.avg_total_prompt_per_file),
            rounded(t.avg_total_completion_per_file),
            rounded(t.avg_prompt_per_round),
            rounded(t.avg_completion_per_round),
        ]]
    } else {
        Vec::new()
    };
    table(
        &mut out,
        &[
            "Method",
            "Avg Coding Prompt/F",
            "Avg Coding Completion/F",
            "Avg Total Prompt/F",
            "Avg Total Completion/F",
            "Avg Prompt/R",
            "Avg Completion/R",
        ],
        &rows,
    );

    out.push_str("## Per-file results\n\n");
    let rows: Vec<Vec<String>> = report
        .files
        .iter()
        .map(|f| {
            vec![
                f.task_id.clone(),
                if f.compiled { "yes" } else { "no" }.into(),
                format!("{}/{}", f.passed_tests, f.total_tests),
                format!("{}/{}/{}", f.findings.high, f.findings.medium, f.findings.low),
                f.source_metrics.loc.to_string(),
                f.source_metrics.complexity.to_string(),
            ]
        })
        .collect();
    table(&mut out, &["Task", "Compiled", "Passed", "H/M/L", "LOC", "Complexity"], &rows);
    out
}

const CSV_COLUMNS: [&str; 13] = [
    "task_id",
    "compiled",
    "passed_tests",
    "total_tests",
    "pass_rate",
    "high",
    "medium",
    "low",
    "loc",
    "ploc",
    "complexity",
    "prompt_tokens",
    "completion_tokens",
];

fn csv(report: &EvalReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_COLUMNS).expect("in-memory write");
    for f in &report.files {
        let prompt: u64 = f.usage.iter().map(|u| u.prompt_tokens).sum();
        let completion: u64 = f.usage.iter().map(|u| u.completion_tokens).sum();
        writer
            .write_record([
                f.task_id.clone(),
                f.compiled.to_string(),
                f.passed_tests.to_string(),
                f.total_tests.to_string(),
                format!("{:.6}", f.pass_rate()),
                f.findings.high.to_string(),
                f.findings.medium.to_string(),
                f.findings.low.to_string(),
                f.source_metrics.loc.to_string(),
                f.source_metrics.ploc.to_string(),
                f.source_metrics.complexity.to_string(),
                prompt.to_string(),
                completion.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Renders a report. Output is deterministic for equal reports.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serializes");
            text.push('\n');
            text
        }
        ReportFormat::Csv => csv(report),
        ReportFormat::Markdown => markdown(report),
    }
}
