use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::{Activation, OptimizerKind};

/// Hyperparameters for the tabular and deep Q-learning agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub episodes: usize,
    /// Bootstrap discount. Rewards already carry financial discounting, so
    /// the finite-horizon default is 1.
    pub gamma: f64,
    /// Optimizer step size for the network.
    pub learning_rate: f64,
    /// Step size of the tabular update.
    pub tabular_alpha: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Per-episode multiplicative decay of epsilon.
    pub eps_decay: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gradient steps between target-network syncs.
    pub sync_period: usize,
    /// Transitions stored before the first gradient step.
    pub min_fill: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            episodes: 150_000,
            gamma: 1.0,
            learning_rate: 1e-3,
            tabular_alpha: 0.1,
            eps_start: 1.0,
            eps_end: 0.001,
            eps_decay: 0.99995,
            batch_size: 64,
            buffer_capacity: 100_000,
            sync_period: 1_000,
            min_fill: 1_000,
            seed: 42,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, reason: &str| Err(Error::config(key, reason));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma", "must lie in [0, 1]");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate", "must be positive");
        }
        if !(self.tabular_alpha > 0.0 && self.tabular_alpha <= 1.0) {
            return fail("tabular_alpha", "must lie in (0, 1]");
        }
        if !(self.eps_start <= 1.0 && self.eps_start >= 0.0) {
            return fail("eps_start", "must lie in [0, 1]");
        }
        if !(self.eps_end > 0.0 && self.eps_end <= self.eps_start) {
            return fail("eps_end", "must lie in (0, eps_start]");
        }
        if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
            return fail("eps_decay", "must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return fail("buffer_capacity", "must hold at least one batch");
        }
        if self.min_fill > self.buffer_capacity {
            return fail("min_fill", "cannot exceed buffer_capacity");
        }
        if self.sync_period == 0 {
            return fail("sync_period", "must be positive");
        }
        if self.hidden.contains(&0) {
            return fail("hidden", "layer widths must be positive");
        }
        Ok(())
    }
}
