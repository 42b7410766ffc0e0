//! Iterative point-cloud registration with a discrete-action agent.
//!
//! The agent observes a source and a target cloud, embeds both with a shared
//! per-point encoder, and predicts one of eleven step sizes for each rotation
//! and translation axis. Steps are accumulated in a disentangled form so that
//! rotations always act about the centroid of the initial source. Training
//! combines behavioral cloning of an expert policy with a clipped policy
//! gradient objective on a Chamfer-based step reward.
//!
//! Module map:
//!
//! - [`geometry`]: rigid transforms, accumulation modes, Chamfer distance
//! - [`metrics`]: MAE, ISO, ADD/ADI and ADI AUC
//! - [`env`]: step table, action decoding, episodes and the step reward
//! - [`expert`]: steady and greedy expert policies
//! - [`model`]: the agent network, its gradients and checkpoint format
//! - [`learn`]: replay buffer, GAE, losses, optimizer, augmentation, training
//! - [`data`]: procedural shapes, corruption pipeline, XYZ files
//! - [`icp`]: point-to-point ICP baseline
//! - [`eval`]: evaluation harness producing the result table
//!
//! Batch workloads (nearest-neighbour scans, trajectory gathering, per-record
//! gradients, evaluation) run on rayon when the `parallel` feature is enabled
//! and fall back to plain iterators otherwise. Both paths produce bitwise
//! identical results.

pub mod data;
pub mod env;
pub mod error;
pub mod eval;
pub mod expert;
pub mod geometry;
pub mod icp;
pub mod learn;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{PointCloud, RigidTransform, TransformAccumulator, TransformMode};
