use super::SelectionPolicy;
use crate::model::{Candidate, RunState};

/// Picks the candidate reported for a run. `None` only when nothing was
/// ever verified.
pub fn select_candidate(state: &RunState, policy: SelectionPolicy) -> Option<&Candidate> {
    match policy {
        SelectionPolicy::BestScore => state.best.as_ref(),
        SelectionPolicy::MinVuln => state
            .candidates
            .iter()
            .filter(|c| c.score.compiled)
            .min_by(|a, b| {
                (a.score.high, a.score.medium, a.score.low)
                    .cmp(&(b.score.high, b.score.medium, b.score.low))
                    .then_with(|| b.score.pass_rate.total_cmp(&a.score.pass_rate))
                    .then_with(|| a.round.cmp(&b.round))
            })
            .or(state.best.as_ref()),
    }
}
