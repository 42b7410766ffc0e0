use serde::{Deserialize, Serialize};

use super::AugmentConfig;
use crate::env::{EpisodeConfig, RewardWeights, StepTable};
use crate::error::{Error, Result};
use crate::expert::ExpertKind;
use crate::geometry::TransformMode;
use crate::model::Arch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: Arch,
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Weight of the PPO term in `l = l_bc + alpha * l_ppo`.
    pub alpha: f64,
    pub clip_ratio: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    /// Observations per gather round.
    pub batch_observations: usize,
    /// Records per gradient step.
    pub minibatch_size: usize,
    pub lr: f64,
    /// Halve the learning rate every this many epochs; 0 keeps it constant.
    pub lr_halving_epochs: usize,
    pub epochs: usize,
    pub normalize_advantages: bool,
    pub augment: bool,
    pub augmentation: AugmentConfig,
    pub expert: ExpertKind,
    pub mode: TransformMode,
    pub reward: RewardWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Arch::FULL,
            n_steps: 10,
            n_trajectories: 4,
            gamma: 0.99,
            gae_lambda: 0.95,
            alpha: 2.0,
            clip_ratio: 0.2,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            batch_observations: 32,
            minibatch_size: 32,
            lr: 1e-3,
            lr_halving_epochs: 10,
            epochs: 50,
            normalize_advantages: true,
            augment: true,
            augmentation: AugmentConfig::default(),
            expert: ExpertKind::Steady,
            mode: TransformMode::Global,
            reward: RewardWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        let checks = [
            (unit(self.gamma), "gamma must be in (0, 1]"),
            (unit(self.gae_lambda), "gae_lambda must be in (0, 1]"),
            (self.alpha >= 0.0 && self.alpha.is_finite(), "alpha must be non-negative"),
            (self.clip_ratio > 0.0 && self.clip_ratio < 1.0, "clip_ratio must be in (0, 1)"),
            (self.entropy_coeff >= 0.0, "entropy_coeff must be non-negative"),
            (self.value_coeff >= 0.0, "value_coeff must be non-negative"),
            (self.n_steps > 0, "n_steps must be positive"),
            (self.n_trajectories > 0, "n_trajectories must be positive"),
            (self.batch_observations > 0, "batch_observations must be positive"),
            (self.minibatch_size > 0, "minibatch_size must be positive"),
            (self.lr > 0.0 && self.lr.is_finite(), "lr must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::invalid(msg));
            }
        }
        self.reward.validate()?;
        self.augmentation.validate()
    }

    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            n_max: self.n_steps,
            mode: self.mode,
            weights: self.reward,
            table: StepTable::default(),
        }
    }
}
