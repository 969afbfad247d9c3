//! Soft Actor-Critic with a small hand-written dense network engine.

mod agent;
mod checkpoint;
mod mlp;
mod replay;
mod train;

pub use agent::{
    squashed_log_prob, ActionMode, Batch, LossReport, PolicySample, Sac, ACTOR_LOG_STD_MAX, ACTOR_LOG_STD_MIN,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use mlp::{Adam, Mlp, MlpCache, MlpGrads, Real, ScalarAdam};
pub use replay::{ReplayBuffer, Transition};
pub use train::{EpisodeLog, Trainer, TrainingSummary};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub gamma: f64,
    /// Learning rate of actor, critics and temperature.
    pub lr: f64,
    pub batch_size: usize,
    /// Target smoothing coefficient.
    pub tau: f64,
    pub updates_per_step: usize,
    pub entropy_target: f64,
    pub initial_alpha: f64,
    pub buffer_capacity: usize,
    /// Env steps of uniform random actions before learning starts.
    pub warmup_steps: usize,
    pub hidden: Vec<usize>,
    /// Checkpoint period in episodes (0 disables periodic checkpoints).
    pub checkpoint_every: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 3e-4,
            batch_size: 256,
            tau: 0.005,
            updates_per_step: 1,
            entropy_target: -3.0,
            initial_alpha: 0.2,
            buffer_capacity: 1_000_000,
            warmup_steps: 1000,
            hidden: vec![256, 256],
            checkpoint_every: 100,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.gamma, self.lr, self.tau, self.initial_alpha]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.batch_size == 0 || self.buffer_capacity == 0 || self.updates_per_step == 0 {
            return Err(Error::Config(
                "gamma, lr, tau, alpha, batch size, capacity and updates per step must be positive".into(),
            ));
        }
        if self.gamma > 1.0 || self.tau > 1.0 {
            return Err(Error::Config("gamma and tau must not exceed 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "hidden layer sizes must be non-empty and positive".into(),
            ));
        }
        if !self.entropy_target.is_finite() {
            return Err(Error::Config("entropy target must be finite".into()));
        }
        Ok(())
    }

    /// Hash of the fields that fix network shapes, used to match checkpoints
    /// against a configuration.
    pub fn config_hash(&self) -> String {
        let key = serde_json::json!({ "hidden": self.hidden, "obs": crate::env::OBS_DIM, "act": crate::env::ACT_DIM });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))[..16].to_string()
    }
}

/// Soft Bellman target `r + gamma (1 - done) (min(q1, q2) - alpha logp)`.
pub fn td_target(
    r: f64,
    q1_next: f64,
    q2_next: f64,
    logp_next: f64,
    gamma: f64,
    alpha: f64,
    done: bool,
) -> f64 {
    if done {
        return r;
    }
    r + gamma * (q1_next.min(q2_next) - alpha * logp_next)
}
