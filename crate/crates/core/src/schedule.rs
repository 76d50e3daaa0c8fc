//! Step-decay learning-rate schedule shared by both trainers.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    pub epochs: u32,
}

impl Default for OptimSchedule {
    fn default() -> Self {
        OptimSchedule {
            initial_lr: 1e-3,
            decay_factor: 0.1,
            decay_every: 50_000,
            epochs: 70,
        }
    }
}

impl OptimSchedule {
    /// `initial_lr · decay_factor^⌊iteration / decay_every⌋`, multiplied out
    /// step by step so that `1e-3` decays to exactly `1e-4` and `1e-5`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        let k = iteration / self.decay_every.max(1);
        let mut lr = self.initial_lr;
        for _ in 0..k {
            lr *= self.decay_factor;
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_decay_points() {
        let s = OptimSchedule::default();
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(49_999), 1e-3);
        assert_eq!(s.lr_at(50_000), 1e-4);
        assert_eq!(s.lr_at(100_000), 1e-5);
    }
}
