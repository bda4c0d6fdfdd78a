use std::fs;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::RefineError;
use crate::model::{normalize_relative, BenchmarkTask};

/// Top-level build outputs not copied into a working copy.
const SKIP_TOP: [&str; 3] = ["out", "cache", "broadcast"];

fn io(path: &Path, err: impl ToString) -> RefineError {
    RefineError::Io(format!("{}: {}", path.display(), err.to_string()))
}

/// Creates a fresh private copy of the task repository at `dest` and removes
/// the target file from it. `dest` must lie outside the repository.
pub fn prepare_workdir(task: &BenchmarkTask, dest: &Path) -> Result<PathBuf, RefineError> {
    let root = task.repo_root.canonicalize().map_err(|e| io(&task.repo_root, e))?;
    if resolve_lexically(dest)?.starts_with(&root) {
        return Err(RefineError::Io(format!(
            "working copy {} must not be inside the repository {}",
            dest.display(),
            root.display()
        )));
    }
    if dest.exists() {
        fs::remove_dir_all(dest).map_err(|e| io(dest, e))?;
    }
    fs::create_dir_all(dest).map_err(|e| io(dest, e))?;
    let dest = dest.canonicalize().map_err(|e| io(dest, e))?;
    let walker = WalkDir::new(&root).min_depth(1).into_iter().filter_entry(|entry| {
        let name = entry.file_name().to_string_lossy();
        name != ".git" && !(entry.depth() == 1 && SKIP_TOP.contains(&name.as_ref()))
    });
    for entry in walker {
        let entry = entry.map_err(|e| io(&root, e))?;
        let rel = entry.path().strip_prefix(&root).expect("walk stays under root");
        let target = dest.join(rel);
        let file_type = entry.file_type();
        if file_type.is_dir() {
            fs::create_dir_all(&target).map_err(|e| io(&target, e))?;
        } else if file_type.is_symlink() {
            #[cfg(unix)]
            {
                let link = fs::read_link(entry.path()).map_err(|e| io(entry.path(), e))?;
                std::os::unix::fs::symlink(link, &target).map_err(|e| io(&target, e))?;
            }
        } else {
            fs::copy(entry.path(), &target).map_err(|e| io(&target, e))?;
        }
    }
    let target = target_path(&dest, task)?;
    if target.exists() {
        fs::remove_file(&target).map_err(|e| io(&target, e))?;
    }
    Ok(dest)
}

/// Canonical form of a path that may not exist yet: the deepest existing
/// ancestor is canonicalized and the rest appended.
fn resolve_lexically(path: &Path) -> Result<PathBuf, RefineError> {
    let absolute = std::path::absolute(path).map_err(|e| io(path, e))?;
    let mut existing = absolute.as_path();
    let mut rest = Vec::new();
    while !existing.exists() {
        rest.push(existing.file_name().unwrap_or_default().to_owned());
        existing = match existing.parent() {
            Some(parent) => parent,
            None => break,
        };
    }
    let mut resolved = existing.canonicalize().map_err(|e| io(existing, e))?;
    resolved.extend(rest.iter().rev());
    Ok(resolved)
}

fn target_path(workdir: &Path, task: &BenchmarkTask) -> Result<PathBuf, RefineError> {
    let rel = normalize_relative(&task.target_file)
        .ok_or_else(|| RefineError::Io(format!("bad target path {}", task.target_file.display())))?;
    Ok(workdir.join(rel))
}

/// Writes a candidate to the task's target file inside `workdir`.
pub fn write_candidate(workdir: &Path, task: &BenchmarkTask, code: &str) -> Result<(), RefineError> {
    let path = target_path(workdir, task)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    let mut body = code.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(&path, body).map_err(|e| io(&path, e))
}
