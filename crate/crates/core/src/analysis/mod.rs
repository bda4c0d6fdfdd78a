//! Pure text analytics: feedback similarity and Solidity source metrics.

mod similarity;
mod source;

pub use similarity::{matching_blocks, sequence_match_ratio, MatchBlock};
pub use source::{source_metrics, DECISION_TOKENS};
