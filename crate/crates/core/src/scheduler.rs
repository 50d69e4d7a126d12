use crate::model::ActionSet;

/// An observation-based scheduler: a distribution over actions as a function
/// of the visible prefix `l1 a1 ... a_{t-1} l_t`.
///
/// Implementations see only labels and actions, never hidden states, so two
/// paths with equal observations always get the same distribution.
pub trait Scheduler {
    fn actions(&self) -> &ActionSet;

    /// Weights indexed like [`Scheduler::actions`]; they sum to one.
    fn distribution(&self, labels: &[String], actions: &[String]) -> Vec<f64>;
}

/// Memoryless uniform choice over all actions.
#[derive(Debug, Clone)]
pub struct UniformScheduler {
    actions: ActionSet,
}

impl UniformScheduler {
    pub fn new(actions: ActionSet) -> Self {
        UniformScheduler { actions }
    }
}

impl Scheduler for UniformScheduler {
    fn actions(&self) -> &ActionSet {
        &self.actions
    }

    fn distribution(&self, _labels: &[String], _actions: &[String]) -> Vec<f64> {
        let n = self.actions.len();
        vec![1.0 / n as f64; n]
    }
}
