//! Sandboxed file-system tools exposed to the refining agent.
//!
//! Two tools are registered: `list_directory` and `read_file`. Every path is
//! normalized lexically (no `..` ever reaches the OS), resolved through
//! symlinks, and re-checked against the root and the deny list. Failures are
//! returned to the agent as tool messages rather than propagated.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use globset::{GlobBuilder, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ParamSchema, ToolSchema};
use crate::model::{normalize_relative, slash_path, Message, ToolCall};

pub const LIST_DIRECTORY: &str = "list_directory";
pub const READ_FILE: &str = "read_file";

pub const DEFAULT_MAX_READ_BYTES: usize = 64 * 1024;
const MIN_READ_BYTES: usize = 128;
const BINARY_SNIFF_BYTES: usize = 8 * 1024;

pub fn default_noise_patterns() -> Vec<String> {
    ["out/**", "cache/**", "broadcast/**", "node_modules/**", ".git/**"]
        .iter()
        .flat_map(|p| [p.to_string(), p.trim_end_matches("/**").to_string()])
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("path `{0}` escapes the project root")]
    PathEscape(String),
    #[error("`{0}` not found")]
    NotFound(String),
    #[error("access to `{0}` is denied")]
    Denied(String),
    #[error("`{0}` is not a text file")]
    Binary(String),
    #[error("`{0}` is not a directory")]
    NotADirectory(String),
    #[error("`{0}` is not a file")]
    NotAFile(String),
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid sandbox policy: {0}")]
    Policy(String),
    #[error("i/o error on `{path}`: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxPolicy {
    pub root: PathBuf,
    #[serde(default)]
    pub deny_patterns: Vec<String>,
    #[serde(default = "default_noise_patterns")]
    pub noise_patterns: Vec<String>,
    #[serde(default = "default_max_read")]
    pub max_read_bytes: usize,
}

fn default_max_read() -> usize {
    DEFAULT_MAX_READ_BYTES
}

impl SandboxPolicy {
    pub fn new(root: impl Into<PathBuf>, deny_patterns: Vec<String>) -> Self {
        Self {
            root: root.into(),
            deny_patterns,
            noise_patterns: default_noise_patterns(),
            max_read_bytes: DEFAULT_MAX_READ_BYTES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    File,
    Dir,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirEntry {
    pub name: String,
    pub kind: EntryKind,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRead {
    pub content: String,
    pub truncated: bool,
}

fn build_set(patterns: &[String]) -> Result<GlobSet, ToolError> {
    let mut builder = GlobSetBuilder::new();
    for pattern in patterns {
        let glob = GlobBuilder::new(pattern)
            .literal_separator(true)
            .build()
            .map_err(|e| ToolError::Policy(format!("{pattern}: {e}")))?;
        builder.add(glob);
    }
    builder.build().map_err(|e| ToolError::Policy(e.to_string()))
}

/// Ancestors of a slash path, the path itself included: `a/b/c`, `a/b`, `a`.
fn ancestors(rel: &str) -> impl Iterator<Item = &str> {
    let mut end = Some(rel.len());
    std::iter::from_fn(move || {
        let current = end?;
        let slice = &rel[..current];
        end = slice.rfind('/');
        Some(slice)
    })
    .filter(|s| !s.is_empty())
}

/// A compiled [`SandboxPolicy`] bound to a canonical root.
#[derive(Debug, Clone)]
pub struct Sandbox {
    root: PathBuf,
    deny: GlobSet,
    noise: GlobSet,
    max_read_bytes: usize,
}

struct Resolved {
    abs: PathBuf,
    rel: String,
}

impl Sandbox {
    pub fn new(policy: &SandboxPolicy) -> Result<Self, ToolError> {
        if policy.max_read_bytes < MIN_READ_BYTES {
            return Err(ToolError::Policy(format!(
                "max_read_bytes must be at least {MIN_READ_BYTES}"
            )));
        }
        let root = policy.root.canonicalize().map_err(|e| ToolError::Io {
            path: policy.root.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            root,
            deny: build_set(&policy.deny_patterns)?,
            noise: build_set(&policy.noise_patterns)?,
            max_read_bytes: policy.max_read_bytes,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Denied when the path or any ancestor matches a deny pattern.
    pub fn is_denied(&self, rel: &str) -> bool {
        ancestors(rel).any(|p| self.deny.is_match(p))
    }

    /// Noise patterns match at any depth (`out` hides `src/out` too).
    pub fn is_noise(&self, rel: &str) -> bool {
        let parts: Vec<&str> = rel.split('/').filter(|s| !s.is_empty()).collect();
        (0..parts.len()).any(|start| {
            (start + 1..=parts.len()).any(|end| self.noise.is_match(parts[start..end].join("/")))
        })
    }

    fn resolve(&self, requested: &str) -> Result<Resolved, ToolError> {
        let lexical = normalize_relative(Path::new(requested))
            .ok_or_else(|| ToolError::PathEscape(requested.to_string()))?;
        let lexical_rel = slash_path(&lexical);
        if self.is_denied(&lexical_rel) {
            return Err(ToolError::Denied(lexical_rel));
        }
        let abs = self
            .root
            .join(&lexical)
            .canonicalize()
            .map_err(|_| ToolError::NotFound(lexical_rel.clone()))?;
        let rel = abs
            .strip_prefix(&self.root)
            .map(slash_path)
            .map_err(|_| ToolError::PathEscape(requested.to_string()))?;
        if self.is_denied(&rel) {
            return Err(ToolError::Denied(lexical_rel));
        }
        Ok(Resolved { abs, rel })
    }

    pub fn list_directory(&self, requested: &str) -> Result<Vec<DirEntry>, ToolError> {
        let dir = self.resolve(requested)?;
        if !dir.abs.is_dir() {
            return Err(ToolError::NotADirectory(dir.rel));
        }
        let io_err = |e: std::io::Error| ToolError::Io {
            path: dir.rel.clone(),
            reason: e.to_string(),
        };
        let mut entries = Vec::new();
        for entry in fs::read_dir(&dir.abs).map_err(io_err)? {
            let entry = entry.map_err(io_err)?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let rel = if dir.rel.is_empty() {
                name.clone()
            } else {
                format!("{}/{name}", dir.rel)
            };
            if self.is_denied(&rel) || self.is_noise(&rel) {
                continue;
            }
            // Follow symlinks, and drop any whose target is outside or hidden.
            let Ok(target) = entry.path().canonicalize() else { continue };
            let Ok(target_rel) = target.strip_prefix(&self.root).map(slash_path) else { continue };
            if self.is_denied(&target_rel) || self.is_noise(&target_rel) {
                continue;
            }
            let Ok(meta) = fs::metadata(&target) else { continue };
            let (kind, size_bytes) = if meta.is_dir() {
                (EntryKind::Dir, 0)
            } else {
                (EntryKind::File, meta.len())
            };
            entries.push(DirEntry {
                name,
                kind,
                size_bytes,
            });
        }
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(entries)
    }

    pub fn read_file(&self, requested: &str) -> Result<FileRead, ToolError> {
        let file = self.resolve(requested)?;
        if !file.abs.is_file() {
            return Err(ToolError::NotAFile(file.rel));
        }
        let io_err = |e: std::io::Error| ToolError::Io {
            path: file.rel.clone(),
            reason: e.to_string(),
        };
        let total = fs::metadata(&file.abs).map_err(io_err)?.len();
        let mut bytes = Vec::new();
        fs::File::open(&file.abs)
            .map_err(io_err)?
            .take(self.max_read_bytes as u64 + 1)
            .read_to_end(&mut bytes)
            .map_err(io_err)?;

        let sniff = &bytes[..bytes.len().min(BINARY_SNIFF_BYTES)];
        if sniff.contains(&0) {
            return Err(ToolError::Binary(file.rel));
        }
        let truncated = total as usize > self.max_read_bytes || bytes.len() > self.max_read_bytes;
        let text = match std::str::from_utf8(&bytes) {
            Ok(text) => text,
            // A cut multi-byte sequence at the end is fine; anything else is binary.
            Err(e) if truncated && e.error_len().is_none() => {
                std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or_default()
            }
            Err(_) => return Err(ToolError::Binary(file.rel)),
        };
        if !truncated {
            return Ok(FileRead {
                content: text.to_string(),
                truncated: false,
            });
        }
        let marker = |shown: usize| format!("\n[truncated: file is {total} bytes, showing the first {shown}]\n");
        let budget = self.max_read_bytes.saturating_sub(marker(self.max_read_bytes).len());
        let mut cut = budget.min(text.len());
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        let mut content = text[..cut].to_string();
        content.push_str(&marker(cut));
        Ok(FileRead {
            content,
            truncated: true,
        })
    }
}

pub fn list_directory(rel_path: &str, policy: &SandboxPolicy) -> Result<Vec<DirEntry>, ToolError> {
    Sandbox::new(policy)?.list_directory(rel_path)
}

pub fn read_file(rel_path: &str, policy: &SandboxPolicy) -> Result<FileRead, ToolError> {
    Sandbox::new(policy)?.read_file(rel_path)
}

/// A callable tool. Results are plain text for the model.
pub trait Tool: Send + Sync {
    fn schema(&self) -> ToolSchema;
    fn run(&self, args: &BTreeMap<String, Value>, sandbox: &Sandbox) -> Result<String, ToolError>;
}

fn path_arg(args: &BTreeMap<String, Value>) -> Result<&str, ToolError> {
    match args.get("path") {
        Some(Value::String(p)) => Ok(p.as_str()),
        Some(_) => Err(ToolError::InvalidArguments("`path` must be a string".into())),
        None => Err(ToolError::InvalidArguments("missing `path`".into())),
    }
}

fn path_schema(name: &str, description: &str) -> ToolSchema {
    ToolSchema {
        name: name.to_string(),
        description: description.to_string(),
        parameters: vec![ParamSchema {
            name: "path".into(),
            kind: "string".into(),
            description: "Path relative to the project root".into(),
            required: true,
        }],
    }
}

struct ListDirectory;

impl Tool for ListDirectory {
    fn schema(&self) -> ToolSchema {
        path_schema(
            LIST_DIRECTORY,
            "List the entries of a project directory (build artifacts are hidden).",
        )
    }

    fn run(&self, args: &BTreeMap<String, Value>, sandbox: &Sandbox) -> Result<String, ToolError> {
        let entries = sandbox.list_directory(path_arg(args)?)?;
        if entries.is_empty() {
            return Ok("(empty directory)".to_string());
        }
        let lines: Vec<String> = entries
            .iter()
            .map(|e| match e.kind {
                EntryKind::Dir => format!("dir   {}/", e.name),
                EntryKind::File => format!("file  {} ({} bytes)", e.name, e.size_bytes),
            })
            .collect();
        Ok(lines.join("\n"))
    }
}

struct ReadFile;

impl Tool for ReadFile {
    fn schema(&self) -> ToolSchema {
        path_schema(
            READ_FILE,
            "Read a text file of the project (interfaces, libraries, dependencies).",
        )
    }

    fn run(&self, args: &BTreeMap<String, Value>, sandbox: &Sandbox) -> Result<String, ToolError> {
        Ok(sandbox.read_file(path_arg(args)?)?.content)
    }
}

/// Result of one dispatch: the tool message plus whether the call failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutcome {
    pub message: Message,
    pub failed: bool,
}

/// Registry of tools bound to one sandbox.
pub struct Toolbox {
    sandbox: Sandbox,
    tools: BTreeMap<String, Box<dyn Tool>>,
}

impl std::fmt::Debug for Toolbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Toolbox")
            .field("root", &self.sandbox.root)
            .field("tools", &self.tools.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Toolbox {
    pub fn new(policy: &SandboxPolicy) -> Result<Self, ToolError> {
        let mut toolbox = Self::without_tools(policy)?;
        toolbox.register(Box::new(ListDirectory));
        toolbox.register(Box::new(ReadFile));
        Ok(toolbox)
    }

    /// A toolbox with nothing registered (memory-only agent).
    pub fn without_tools(policy: &SandboxPolicy) -> Result<Self, ToolError> {
        Ok(Self {
            sandbox: Sandbox::new(policy)?,
            tools: BTreeMap::new(),
        })
    }

    pub fn register(&mut self, tool: Box<dyn Tool>) {
        self.tools.insert(tool.schema().name, tool);
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    pub fn schemas(&self) -> Vec<ToolSchema> {
        self.tools.values().map(|t| t.schema()).collect()
    }

    pub fn dispatch(&self, call: &ToolCall) -> ToolOutcome {
        let result = match self.tools.get(&call.tool_name) {
            None => Err(ToolError::UnknownTool(call.tool_name.clone())),
            Some(tool) => catch_unwind(AssertUnwindSafe(|| tool.run(&call.arguments, &self.sandbox)))
                .unwrap_or_else(|_| {
                    Err(ToolError::Io {
                        path: String::new(),
                        reason: "tool panicked".into(),
                    })
                }),
        };
        match result {
            Ok(text) => ToolOutcome {
                message: Message::tool(call.id.clone(), text),
                failed: false,
            },
            Err(err) => ToolOutcome {
                message: Message::tool(call.id.clone(), format!("error: {err}")),
                failed: true,
            },
        }
    }
}

/// Runs one tool call under `policy` and returns the tool message.
pub fn dispatch(call: &ToolCall, policy: &SandboxPolicy) -> Message {
    match Toolbox::new(policy) {
        Ok(toolbox) => toolbox.dispatch(call).message,
        Err(err) => Message::tool(call.id.clone(), format!("error: {err}")),
    }
}
