use super::{normalize, returns_and_gae, TrainConfig};
use crate::env::{ActionVector, Episode};
use crate::error::{Error, Result};
use crate::expert::Expert;
use crate::geometry::{PointCloud, RigidTransform};
use crate::model::{encode, forward_with_target, log_prob_entropy, sample_action, AgentParams, EncoderCache};
use crate::par;
use crate::rng::stream;

/// A registration problem with known ground truth.
#[derive(Debug, Clone)]
pub struct Observation {
    pub source: PointCloud,
    pub target: PointCloud,
    /// The corruption that produced the source.
    pub truth: RigidTransform,
}

#[derive(Debug, Clone)]
pub struct BufferRecord {
    /// Source as observed before this step.
    pub source: PointCloud,
    /// Index into [`ReplayBuffer::targets`].
    pub target: usize,
    pub trajectory: usize,
    pub step: usize,
    pub expert_action: ActionVector,
    pub agent_action: ActionVector,
    pub old_logp: f64,
    pub old_value: f64,
    pub reward: f64,
    pub return_: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    pub targets: Vec<PointCloud>,
    pub records: Vec<BufferRecord>,
}

impl ReplayBuffer {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.targets.clear();
        self.records.clear();
    }

    pub fn mean_reward(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.reward).sum::<f64>() / self.records.len() as f64
    }
}

fn run_trajectory(
    obs: &Observation,
    target_index: usize,
    target: &EncoderCache,
    params: &AgentParams,
    cfg: &TrainConfig,
    trajectory: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<BufferRecord>> {
    let mut ep = Episode::reset(obs.source.clone(), obs.target.clone(), Some(obs.truth), cfg.episode())?;
    let mut records = Vec::with_capacity(cfg.n_steps);
    while !ep.is_done() {
        let source = ep.current().clone();
        let out = forward_with_target(params, &source, target);
        if !out.is_finite() {
            return Err(Error::Numerical("non-finite policy output while gathering".into()));
        }
        let action = sample_action(&out, rng);
        let (old_logp, _) = log_prob_entropy(&out, &action);
        let expert_action = cfg.expert.label(&ep)?;
        let step = ep.step_count();
        let outcome = ep.step(&action)?;
        records.push(BufferRecord {
            source,
            target: target_index,
            trajectory,
            step,
            expert_action,
            agent_action: action,
            old_logp,
            old_value: out.value,
            reward: outcome.reward.expect("ground truth is known"),
            return_: 0.0,
            advantage: 0.0,
        });
    }
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let values: Vec<f64> = records.iter().map(|r| r.old_value).collect();
    let (returns, adv) = returns_and_gae(&rewards, &values, cfg.gamma, cfg.gae_lambda);
    for ((r, ret), a) in records.iter_mut().zip(returns).zip(adv) {
        r.return_ = ret;
        r.advantage = a;
    }
    Ok(records)
}

/// Rolls out `n_trajectories` stochastic episodes of `n_steps` from every
/// observation, labelling each step with the expert action.
///
/// Trajectory `j` of observation `i` draws from its own random stream
/// derived from `(seed, i, j)`, and records are stored in `(i, j, step)`
/// order, so the buffer does not depend on the thread count.
pub fn gather(observations: &[Observation], params: &AgentParams, cfg: &TrainConfig, seed: u64) -> Result<ReplayBuffer> {
    cfg.validate()?;
    let encoded = par::map(observations, |o| encode(params, &o.target));
    let n_traj = cfg.n_trajectories;
    let trajectories = par::map_range(observations.len() * n_traj, |k| {
        let (i, j) = (k / n_traj, k % n_traj);
        let mut rng = stream(seed, &[i as u64, j as u64]);
        run_trajectory(&observations[i], i, &encoded[i], params, cfg, k, &mut rng)
    });
    let mut records = Vec::with_capacity(observations.len() * n_traj * cfg.n_steps);
    for t in trajectories {
        records.extend(t?);
    }
    if cfg.normalize_advantages {
        let mut adv: Vec<f64> = records.iter().map(|r| r.advantage).collect();
        normalize(&mut adv);
        for (r, a) in records.iter_mut().zip(adv) {
            r.advantage = a;
        }
    }
    Ok(ReplayBuffer {
        targets: observations.iter().map(|o| o.target.clone()).collect(),
        records,
    })
}
