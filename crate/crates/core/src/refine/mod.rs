//! The refinement loop: a coding round followed by verify/refine rounds
//! with stopping rules, best-candidate tracking, pruning and checkpoints.

mod checkpoint;
mod config;
mod driver;
mod extract;
mod prompts;
mod prune;
mod select;
mod stopping;
mod workspace;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_terminal_states, save_checkpoint, task_dir, CheckpointError, TERMINAL_FILE};
pub use config::{LoopConfig, SelectionPolicy};
pub use driver::{resume_or_run, run_task, Refiner, StopSignal};
pub use extract::{code_hash, extract_code};
pub use prompts::Prompts;
pub use prune::{message_rounds, prune_messages};
pub use select::select_candidate;
pub use stopping::{is_looping, is_perfect, is_stagnant, update_best};
pub use workspace::{prepare_workdir, write_candidate};

use crate::llm::LlmError;
use crate::model::ModelError;
use crate::verify::VerifyError;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Task(#[from] ModelError),
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("task `{0}` has no requirement summary")]
    MissingSummary(String),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("no code block in the assistant reply")]
    NoCodeBlock,
    #[error(transparent)]
    Llm(#[from] LlmError),
}
