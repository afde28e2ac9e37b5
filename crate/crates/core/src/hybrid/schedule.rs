//! Training/operation frame cadence and the exploration probability.

use crate::config::ScheduleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Training,
    Operation,
}

impl FrameType {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::Training => "training",
            FrameType::Operation => "operation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSchedule {
    config: ScheduleConfig,
    epsilon: f64,
}

impl FrameSchedule {
    pub fn new(config: &ScheduleConfig) -> Self {
        Self {
            config: config.clone(),
            epsilon: config.epsilon0,
        }
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.config
    }

    /// Dense training frames during warm-up, sparse afterwards.
    pub fn is_training(&self, ci: u64) -> bool {
        if ci <= self.config.dense_until {
            ci % self.config.dense_period == 0
        } else {
            ci % self.config.sparse_period == 0
        }
    }

    pub fn frame(&self, ci: u64) -> FrameType {
        if self.is_training(ci) {
            FrameType::Training
        } else {
            FrameType::Operation
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Applies the decay due at CI `ci`: one multiplication at every positive
    /// multiple of the decay period.
    pub fn advance(&mut self, ci: u64) {
        if ci > 0 && ci % self.config.epsilon_decay_every == 0 {
            self.epsilon *= self.config.epsilon_decay;
        }
    }

    /// Exploration probability in force at CI `ci` for a fresh schedule.
    pub fn epsilon_at(&self, ci: u64) -> f64 {
        let decays = (ci / self.config.epsilon_decay_every) as i32;
        self.config.epsilon0 * self.config.epsilon_decay.powi(decays)
    }
}
