//! Imitation plus reinforcement learning: buffer gathering, returns and
//! advantages, the behavioral-cloning and clipped PPO losses, the optimizer,
//! shape augmentation and the epoch loop.

mod augment;
mod buffer;
mod config;
mod gae;
mod loss;
mod optim;
mod trainer;

pub use augment::{augment, mirror, AugmentConfig, Augmentation};
pub use buffer::{gather, BufferRecord, Observation, ReplayBuffer};
pub use config::TrainConfig;
pub use gae::{normalize, returns_and_gae};
pub use loss::{bc_loss, gradients, ppo_loss, ppo_policy_term, LossSpec, LossStats};
pub use optim::Adam;
pub use trainer::{lr_at, update_epoch, EpochStats, Trainer, UpdateStats};
