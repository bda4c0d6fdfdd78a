use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;
use tracing::warn;

use crate::model::{RunState, SCHEMA_VERSION};

pub const TERMINAL_FILE: &str = "terminal.json";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o error at {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("checkpoint {path} has schema version {found}, expected {expected}")]
    VersionMismatch { path: PathBuf, found: u64, expected: u32 },
    #[error("checkpoint {path} is corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

/// Directory name for a task id; anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn task_dir(dir: &Path, task_id: &str) -> PathBuf {
    let safe: String = task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    let safe = if safe.is_empty() || safe.chars().all(|c| c == '.') {
        format!("_{safe}")
    } else {
        safe
    };
    dir.join(safe)
}

fn io_error(path: &Path, err: impl ToString) -> CheckpointError {
    CheckpointError::Io {
        path: path.to_path_buf(),
        reason: err.to_string(),
    }
}

/// Writes `round_<t>.json`, or `terminal.json` once the run has stopped.
/// The file appears atomically (temporary file, then rename).
pub fn save_checkpoint(state: &RunState, dir: &Path) -> Result<PathBuf, CheckpointError> {
    let task_dir = task_dir(dir, &state.task_id);
    fs::create_dir_all(&task_dir).map_err(|e| io_error(&task_dir, e))?;
    let name = if state.is_terminated() {
        TERMINAL_FILE.to_string()
    } else {
        format!("round_{}.json", state.round)
    };
    let path = task_dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(&task_dir).map_err(|e| io_error(&task_dir, e))?;
    tmp.write_all(state.to_json().as_bytes()).map_err(|e| io_error(&path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_error(&path, e))?;
    tmp.persist(&path).map_err(|e| io_error(&path, e.error))?;
    Ok(path)
}

fn read_state(path: &Path) -> Result<RunState, CheckpointError> {
    let corrupt = |reason: String| CheckpointError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| corrupt(e.to_string()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let found = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| corrupt("missing schema_version".into()))?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(CheckpointError::VersionMismatch {
            path: path.to_path_buf(),
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))
}

fn round_files(task_dir: &Path) -> Result<Vec<(u32, PathBuf)>, CheckpointError> {
    let entries = match fs::read_dir(task_dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_error(task_dir, e)),
    };
    let mut rounds: Vec<(u32, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter_map(|entry| {
            let name = entry.file_name().to_string_lossy().into_owned();
            let round = name.strip_prefix("round_")?.strip_suffix(".json")?.parse().ok()?;
            Some((round, entry.path()))
        })
        .collect();
    rounds.sort_by_key(|r| std::cmp::Reverse(r.0));
    Ok(rounds)
}

/// The terminal state if present, else the highest-round readable
/// checkpoint. Corrupt files are skipped in favour of older rounds; a schema
/// version mismatch is an error.
pub fn load_checkpoint(task_id: &str, dir: &Path) -> Result<Option<RunState>, CheckpointError> {
    let task_dir = task_dir(dir, task_id);
    let terminal = task_dir.join(TERMINAL_FILE);
    if terminal.exists() {
        match read_state(&terminal) {
            Ok(state) => return Ok(Some(state)),
            Err(CheckpointError::Corrupt { path, reason }) => {
                warn!(path = %path.display(), %reason, "ignoring corrupt terminal checkpoint");
            }
            Err(e) => return Err(e),
        }
    }
    for (_, path) in round_files(&task_dir)? {
        match read_state(&path) {
            Ok(state) => return Ok(Some(state)),
            Err(CheckpointError::Corrupt { path, reason }) => {
                warn!(path = %path.display(), %reason, "falling back past corrupt checkpoint");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Terminal states of every task under `dir`, sorted by task id.
pub fn load_terminal_states(dir: &Path) -> Result<Vec<RunState>, CheckpointError> {
    let mut states = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    for entry in entries.filter_map(Result::ok) {
        let path = entry.path().join(TERMINAL_FILE);
        if path.is_file() {
            states.push(read_state(&path)?);
        }
    }
    states.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(states)
}
