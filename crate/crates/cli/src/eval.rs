use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use solrefine_core::metrics::{build_report, emit_report, FileResult, ReportFormat};
use solrefine_core::model::{ForgeFeedback, RunState};
use solrefine_core::refine::{load_terminal_states, SelectionPolicy};

/// `dir/checkpoints` when present, otherwise `dir` itself.
pub fn checkpoint_root(dir: &Path) -> PathBuf {
    let nested = dir.join("checkpoints");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

pub fn load_runs(dir: &Path) -> Result<Vec<RunState>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let runs = load_terminal_states(&checkpoint_root(dir))?;
    if runs.is_empty() {
        bail!("no finished runs under {}", dir.display());
    }
    Ok(runs)
}

/// A run that never produced a verified candidate counts as a file that
/// did not compile.
pub fn file_result(state: &RunState, policy: SelectionPolicy) -> FileResult {
    FileResult::from_run(state, policy).unwrap_or_else(|| {
        let forge = ForgeFeedback::compile_failure("no verified candidate");
        let mut result = FileResult::from_feedback(&state.task_id, &forge, &[], "", state.expected_tests);
        result.usage = state.usage.clone();
        result
    })
}

/// Baseline results: a JSON array of file results, or a results directory.
pub fn load_baseline(path: &Path, policy: SelectionPolicy) -> Result<Vec<FileResult>> {
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    Ok(load_runs(path)?.iter().map(|s| file_result(s, policy)).collect())
}

pub fn cmd_eval(
    dir: &Path,
    baseline: Option<&Path>,
    policy: SelectionPolicy,
    format: ReportFormat,
    out: Option<&Path>,
) -> Result<()> {
    let runs = load_runs(dir)?;
    let results: Vec<FileResult> = runs.iter().map(|s| file_result(s, policy)).collect();
    let baseline = baseline.map(|b| load_baseline(b, policy)).transpose()?;
    let label = dir
        .file_name()
        .map_or_else(|| "results".to_string(), |n| n.to_string_lossy().into_owned());
    let report = build_report(&label, policy, results, baseline.as_deref())?;
    let text = emit_report(&report, format);
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
