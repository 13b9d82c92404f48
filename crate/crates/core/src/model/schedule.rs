use serde::{Deserialize, Serialize};

/// Plateau handling on the validation likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Halve the learning rate after this many evaluations without improvement.
    pub halve_after: u32,
    /// Stop after this many evaluations without improvement.
    pub stop_after: u32,
    /// Batches between evaluations.
    pub eval_interval: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            halve_after: 3,
            stop_after: 8,
            eval_interval: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    Continue,
    HalveLr,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub config: ScheduleConfig,
    pub best: Option<f64>,
    pub evals_since_improvement: u32,
}

impl ScheduleState {
    pub fn new(config: ScheduleConfig) -> Self {
        Self {
            config,
            best: None,
            evals_since_improvement: 0,
        }
    }

    /// Records a validation score (higher is better). The non-improvement
    /// count is not reset by halving, so the rate halves at every multiple
    /// of `halve_after` until `stop_after` is reached.
    pub fn tick(&mut self, score: f64) -> ScheduleAction {
        if self.best.is_none_or(|best| score > best) {
            self.best = Some(score);
            self.evals_since_improvement = 0;
            return ScheduleAction::Continue;
        }
        self.evals_since_improvement += 1;
        let n = self.evals_since_improvement;
        if n >= self.config.stop_after {
            ScheduleAction::EarlyStop
        } else if self.config.halve_after > 0 && n % self.config.halve_after == 0 {
            ScheduleAction::HalveLr
        } else {
            ScheduleAction::Continue
        }
    }
}
