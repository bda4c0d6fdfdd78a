use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};
use solrefine_core::llm::{build_backend, ChatBackend};
use solrefine_core::model::{RequirementMode, RunState, TerminationKind};
use solrefine_core::refine::{load_checkpoint, prepare_workdir, resume_or_run, task_dir, Refiner};
use solrefine_core::toolbox::Toolbox;
use solrefine_core::trajectory::{clean, record_rounds, Dataset};
use solrefine_core::verify::{FakeVerifier, ToolchainVerifier, Verifier};
use tracing::{error, info};

use crate::manifest::{RunManifest, TaskEntry, VerifierKind};
use crate::CliError;

/// Runs every task that has not terminated yet, `parallel_workers` at a time.
pub fn cmd_run(manifest: &RunManifest) -> Result<(), CliError> {
    if manifest.verifier.kind == VerifierKind::Toolchain {
        let missing = ToolchainVerifier::new(manifest.verifier.config.clone()).missing_tools();
        if !missing.is_empty() {
            return Err(CliError::Environment(anyhow!("verifier binaries not found: {}", missing.join(", "))));
        }
    }
    for dir in [manifest.checkpoint_dir(), manifest.work_dir(), manifest.trajectory_dir()] {
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::Other)?;
    }

    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<usize>> = Mutex::new(Vec::new());
    let stdout = Mutex::new(std::io::stdout());
    let workers = manifest.parallel_workers.min(manifest.tasks.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = manifest.tasks.get(idx) else { break };
                match run_one(manifest, entry) {
                    Ok((state, new_calls)) => {
                        let line = summary_line(&state, new_calls);
                        let mut out = stdout.lock().unwrap();
                        let _ = writeln!(out, "{line}");
                        let _ = out.flush();
                    }
                    Err(err) => {
                        error!(task = %entry.task.task_id, error = %format!("{err:#}"), "task failed");
                        let mut out = stdout.lock().unwrap();
                        let _ = writeln!(out, "{}\terror\t{err:#}", entry.task.task_id);
                        failures.lock().unwrap().push(idx);
                    }
                }
            });
        }
    });

    let mut failures = failures.into_inner().unwrap();
    failures.sort_unstable();
    let failed: Vec<&str> = failures.iter().map(|&idx| manifest.tasks[idx].task.task_id.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!("{} task(s) failed: {}", failed.len(), failed.join(", "))))
    }
}

fn summary_line(state: &RunState, new_calls: u64) -> String {
    let kind = state
        .terminated
        .as_ref()
        .map_or(TerminationKind::OperatorStop.to_string(), |t| t.kind.to_string());
    let (passed, total, vuln) = match state.best.as_ref().and_then(|b| Some((b, state.report_for(b)?))) {
        Some((best, report)) => (
            report.forge.passed_tests,
            report.forge.total_tests.max(state.expected_tests.unwrap_or(0)),
            format!("{}/{}/{}", best.score.high, best.score.medium, best.score.low),
        ),
        None => (0, state.expected_tests.unwrap_or(0), "-".into()),
    };
    format!(
        "{}\t{kind}\trounds={}\tpassed={passed}/{total}\tvuln={vuln}\tllm_calls={}\tnew_calls={new_calls}",
        state.task_id, state.round, state.llm_calls
    )
}

fn backend_for(manifest: &RunManifest, script: &Option<Vec<solrefine_core::llm::ScriptedReply>>) -> Result<Box<dyn ChatBackend>> {
    Ok(build_backend(&manifest.backend, script.clone())?)
}

/// Summary text for summary-mode runs: from the task, from an earlier run's
/// cache, or freshly generated and cached.
fn summary_for(manifest: &RunManifest, entry: &TaskEntry) -> Result<Option<String>> {
    if manifest.requirement_mode != RequirementMode::Summary {
        return Ok(None);
    }
    if let Some(s) = entry.task.requirement_summary.as_deref().filter(|s| !s.trim().is_empty()) {
        return Ok(Some(s.to_string()));
    }
    let cache = task_dir(&manifest.summary_dir(), &entry.task.task_id).with_extension("txt");
    if let Ok(text) = fs::read_to_string(&cache) {
        return Ok(Some(text));
    }
    let llm = backend_for(manifest, &entry.summary_script)?;
    let summary = solrefine_core::trajectory::summarize_requirement(&entry.task, llm.as_ref())?;
    fs::create_dir_all(manifest.summary_dir())?;
    fs::write(&cache, &summary).with_context(|| format!("writing {}", cache.display()))?;
    Ok(Some(summary))
}

fn run_one(manifest: &RunManifest, entry: &TaskEntry) -> Result<(RunState, u64)> {
    let checkpoints = manifest.checkpoint_dir();
    let before = load_checkpoint(&entry.task.task_id, &checkpoints)?;
    if let Some(state) = &before {
        if state.is_terminated() {
            info!(task = %state.task_id, "already terminated; skipping");
            return Ok((state.clone(), 0));
        }
    }
    let calls_before = before.as_ref().map_or(0, |s| s.llm_calls);

    let mut task = entry.task.clone();
    if let Some(summary) = summary_for(manifest, entry)? {
        task.requirement_summary = Some(summary);
    }
    let workdir = task_dir(&manifest.work_dir(), &task.task_id);
    let workdir = prepare_workdir(&task, &workdir)?;
    let toolbox = Toolbox::new(&manifest.sandbox_policy(&task, &workdir))?;
    let llm = backend_for(manifest, &entry.llm_script)?;
    let verifier: Box<dyn Verifier> = match manifest.verifier.kind {
        VerifierKind::Fake => Box::new(FakeVerifier::new(entry.verifier_script.clone().unwrap_or_default())),
        VerifierKind::Toolchain => Box::new(ToolchainVerifier::new(manifest.verifier.config.clone())),
    };
    let stop_file = manifest.stop_file();
    let stop = move || stop_file.exists();
    let refiner = Refiner::new(&task, llm.as_ref(), verifier.as_ref(), &toolbox, &manifest.loop_config)
        .with_prompts(manifest.prompts.clone())
        .with_mode(manifest.requirement_mode)
        .with_checkpoints(&checkpoints)
        .with_stop(&stop);
    let state = resume_or_run(&refiner)?;
    write_trajectories(&manifest.trajectory_dir(), &state)?;
    let new_calls = state.llm_calls.saturating_sub(calls_before);
    Ok((state, new_calls))
}

fn write_trajectories(dir: &Path, state: &RunState) -> Result<()> {
    let samples = record_rounds(state).iter().map(clean).collect::<Result<Vec<_>, _>>()?;
    let ds = Dataset {
        name: state.task_id.clone(),
        samples,
        split_seed: 0,
    };
    let path = task_dir(dir, &state.task_id).with_extension("jsonl");
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
