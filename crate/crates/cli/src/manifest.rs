use std::collections::HashSet;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use solrefine_core::llm::{BackendConfig, BackendKind, ScriptedReply};
use solrefine_core::model::{validate_task, BenchmarkTask, RequirementMode};
use solrefine_core::refine::{LoopConfig, Prompts};
use solrefine_core::toolbox::{default_noise_patterns, SandboxPolicy, DEFAULT_MAX_READ_BYTES};
use solrefine_core::verify::{FakeRound, VerifierConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifierKind {
    Fake,
    Toolchain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifierSection {
    pub kind: VerifierKind,
    #[serde(flatten)]
    pub config: VerifierConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SandboxDefaults {
    /// Added to every task's own deny patterns.
    #[serde(default)]
    pub deny_patterns: Vec<String>,
    #[serde(default)]
    pub noise_patterns: Option<Vec<String>>,
    #[serde(default)]
    pub max_read_bytes: Option<usize>,
}

/// A task plus the canned replies used by the mock backend and fake verifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEntry {
    #[serde(flatten)]
    pub task: BenchmarkTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_script: Option<Vec<ScriptedReply>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_script: Option<Vec<ScriptedReply>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_script: Option<Vec<FakeRound>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tasks: Vec<TaskEntry>,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
    pub backend: BackendConfig,
    pub verifier: VerifierSection,
    #[serde(default)]
    pub sandbox: SandboxDefaults,
    #[serde(default = "one")]
    pub parallel_workers: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub requirement_mode: RequirementMode,
    #[serde(default)]
    pub prompts: Prompts,
}

fn one() -> usize {
    1
}

fn lexical(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::ParentDir => {
                out.pop();
            }
            Component::CurDir => {}
            other => out.push(other),
        }
    }
    out
}

/// Absolute, `..`-free form of `path`, following symlinks for the part
/// that exists.
fn absolute(path: &Path) -> PathBuf {
    if let Ok(canon) = path.canonicalize() {
        return canon;
    }
    let mut existing = lexical(path);
    let mut rest = Vec::new();
    while !existing.exists() {
        match existing.file_name() {
            Some(name) => rest.push(name.to_os_string()),
            None => break,
        }
        existing.pop();
    }
    let mut out = existing.canonicalize().unwrap_or(existing);
    out.extend(rest.iter().rev());
    out
}

impl RunManifest {
    /// Reads and validates a manifest. Relative paths resolve against the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = absolute(path.parent().unwrap_or(Path::new(".")));
        let base = if base.as_os_str().is_empty() { absolute(Path::new(".")) } else { base };
        manifest.output_dir = absolute(&base.join(&manifest.output_dir));
        for entry in &mut manifest.tasks {
            entry.task.repo_root = absolute(&base.join(&entry.task.repo_root));
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            bail!("manifest lists no tasks");
        }
        if self.parallel_workers == 0 {
            bail!("parallel_workers must be positive");
        }
        self.loop_config.validate().map_err(anyhow::Error::msg)?;
        self.verifier.config.validate().map_err(anyhow::Error::msg)?;
        self.backend.validate()?;
        let mut seen = HashSet::new();
        for entry in &self.tasks {
            let task = &entry.task;
            if !seen.insert(task.task_id.as_str()) {
                bail!("duplicate task id `{}`", task.task_id);
            }
            if !task.repo_root.is_dir() {
                bail!("task `{}`: repo_root {} is not a directory", task.task_id, task.repo_root.display());
            }
            validate_task(task).with_context(|| format!("task `{}`", task.task_id))?;
            let root = absolute(&task.repo_root);
            if self.output_dir.starts_with(&root) {
                bail!(
                    "output_dir {} lies inside the repository of task `{}`",
                    self.output_dir.display(),
                    task.task_id
                );
            }
            if self.verifier.kind == VerifierKind::Fake && entry.verifier_script.as_ref().is_none_or(Vec::is_empty) {
                bail!("task `{}`: the fake verifier needs a verifier_script", task.task_id);
            }
            if self.backend.kind == BackendKind::Mock && entry.llm_script.is_none() {
                bail!("task `{}`: the mock backend needs an llm_script", task.task_id);
            }
            let has_summary = task.requirement_summary.as_deref().is_some_and(|s| !s.trim().is_empty());
            if self.requirement_mode == RequirementMode::Summary
                && !has_summary
                && self.backend.kind == BackendKind::Mock
                && entry.summary_script.is_none()
            {
                bail!("task `{}`: summary mode needs requirement_summary or a summary_script", task.task_id);
            }
        }
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output_dir.join("checkpoints")
    }

    pub fn work_dir(&self) -> PathBuf {
        self.output_dir.join("work")
    }

    pub fn trajectory_dir(&self) -> PathBuf {
        self.output_dir.join("trajectories")
    }

    pub fn summary_dir(&self) -> PathBuf {
        self.output_dir.join("summaries")
    }

    pub fn stop_file(&self) -> PathBuf {
        self.output_dir.join("STOP")
    }

    pub fn sandbox_policy(&self, task: &BenchmarkTask, workdir: &Path) -> SandboxPolicy {
        let mut deny = task.deny_patterns.clone();
        for pattern in &self.sandbox.deny_patterns {
            if !deny.contains(pattern) {
                deny.push(pattern.clone());
            }
        }
        SandboxPolicy {
            root: workdir.to_path_buf(),
            deny_patterns: deny,
            noise_patterns: self.sandbox.noise_patterns.clone().unwrap_or_else(default_noise_patterns),
            max_read_bytes: self.sandbox.max_read_bytes.unwrap_or(DEFAULT_MAX_READ_BYTES),
        }
    }
}
