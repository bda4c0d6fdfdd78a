use crate::analysis::sequence_match_ratio;
use crate::model::{Candidate, FeedbackReport};

/// All tests pass (and there is at least one) with no High findings.
pub fn is_perfect(report: &FeedbackReport) -> bool {
    let forge = &report.forge;
    forge.compiled
        && forge.total_tests > 0
        && forge.passed_tests == forge.total_tests
        && report.severity_counts().high == 0
}

/// No strict pass-rate improvement over the best earlier rate for `n`
/// consecutive rounds.
pub fn is_stagnant(history: &[FeedbackReport], n: u32) -> bool {
    let n = n as usize;
    if n == 0 || history.len() < n + 1 {
        return false;
    }
    let split = history.len() - n;
    let best_before = history[..split]
        .iter()
        .map(|r| r.forge.pass_rate())
        .fold(f64::NEG_INFINITY, f64::max);
    history[split..].iter().all(|r| r.forge.pass_rate() <= best_before)
}

pub fn is_looping(current: &FeedbackReport, previous: &FeedbackReport, tau: f64) -> bool {
    sequence_match_ratio(&current.rendered_text, &previous.rendered_text) > tau
}

/// Replaces `best` only when `candidate` scores strictly higher.
pub fn update_best(best: &mut Option<Candidate>, candidate: &Candidate) -> bool {
    let better = best.as_ref().is_none_or(|b| candidate.score > b.score);
    if better {
        *best = Some(candidate.clone());
    }
    better
}
