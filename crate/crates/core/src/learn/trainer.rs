use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::{gather, gradients, Adam, Augmentation, LossSpec, Observation, ReplayBuffer, TrainConfig};
use crate::data::{make_pair, CorruptionConfig};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::model::AgentParams;
use crate::rng::{derive_seed, stream};

const TAG_INIT: u64 = 0;
const TAG_ORDER: u64 = 1;
const TAG_OBSERVATION: u64 = 2;
const TAG_GATHER: u64 = 3;
const TAG_UPDATE: u64 = 4;

/// `lr · 0.5^⌊epoch / period⌋`.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.lr_halving_epochs == 0 {
        return cfg.lr;
    }
    cfg.lr * 0.5f64.powi((epoch / cfg.lr_halving_epochs) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UpdateStats {
    pub bc_loss: f64,
    pub ppo_loss: f64,
    pub total_loss: f64,
    pub expert_agreement: f64,
    pub batches: usize,
}

/// One pass over the buffer in shuffled minibatches, then clears it.
pub fn update_epoch(
    buffer: &mut ReplayBuffer,
    params: &mut AgentParams,
    opt: &mut Adam,
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut impl Rng,
) -> Result<UpdateStats> {
    let spec = LossSpec::combined(cfg);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    order.shuffle(rng);
    let mut stats = UpdateStats::default();
    let mut seen = 0usize;
    for batch in order.chunks(cfg.minibatch_size) {
        let (s, grads) = gradients(buffer, batch, params, &spec)?;
        opt.step(params, &grads, lr);
        let n = batch.len() as f64;
        stats.bc_loss += s.bc * n;
        stats.ppo_loss += s.ppo * n;
        stats.total_loss += s.total * n;
        stats.expert_agreement += s.expert_agreement * n;
        stats.batches += 1;
        seen += batch.len();
    }
    if seen > 0 {
        let n = seen as f64;
        stats.bc_loss /= n;
        stats.ppo_loss /= n;
        stats.total_loss /= n;
        stats.expert_agreement /= n;
    }
    if !params.is_finite() {
        return Err(Error::Numerical("parameters became non-finite".into()));
    }
    buffer.clear();
    Ok(stats)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub bc_loss: f64,
    pub ppo_loss: f64,
    pub total_loss: f64,
    pub mean_reward: f64,
    pub expert_agreement: f64,
    pub records: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<BTreeMap<String, f64>>,
}

impl EpochStats {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

/// The epoch loop over a fixed set of clean training shapes. Every epoch
/// visits each shape once with a fresh corruption (and augmentation).
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: AgentParams,
    pub cfg: TrainConfig,
    opt: Adam,
    corruption: CorruptionConfig,
    shapes: Vec<PointCloud>,
    seed: u64,
    epoch: usize,
}

impl Trainer {
    pub fn new(shapes: Vec<PointCloud>, cfg: TrainConfig, corruption: CorruptionConfig, seed: u64) -> Result<Self> {
        let params = AgentParams::init(cfg.arch, derive_seed(seed, &[TAG_INIT]));
        Self::with_params(params, shapes, cfg, corruption, seed)
    }

    /// Continues from existing parameters, e.g. for fine-tuning.
    pub fn with_params(
        params: AgentParams,
        shapes: Vec<PointCloud>,
        cfg: TrainConfig,
        corruption: CorruptionConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        corruption.validate()?;
        if params.arch != cfg.arch {
            return Err(Error::invalid("parameters do not match the configured architecture"));
        }
        if shapes.is_empty() {
            return Err(Error::invalid("no training shapes"));
        }
        if let Some(s) = shapes.iter().find(|s| s.len() != corruption.n_total) {
            return Err(Error::invalid(format!(
                "training shape has {} points, expected {}",
                s.len(),
                corruption.n_total
            )));
        }
        Ok(Self {
            opt: Adam::new(&params),
            params,
            cfg,
            corruption,
            shapes,
            seed,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn observation(&self, shape: usize, path: &[u64]) -> Result<Observation> {
        let mut rng = stream(self.seed, path);
        let clean = &self.shapes[shape];
        let clean = if self.cfg.augment {
            Augmentation::sample(&self.cfg.augmentation, &mut rng).apply(clean, &clean.centroid())
        } else {
            clean.clone()
        };
        let pair = make_pair(&clean, &self.corruption, &mut rng)?;
        Ok(Observation {
            source: pair.source,
            target: pair.target,
            truth: pair.truth,
        })
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let e = self.epoch as u64;
        let lr = lr_at(&self.cfg, self.epoch);
        let mut order: Vec<usize> = (0..self.shapes.len()).collect();
        order.shuffle(&mut stream(self.seed, &[TAG_ORDER, e]));
        let mut update_rng = stream(self.seed, &[TAG_UPDATE, e]);
        let (mut reward, mut agreement, mut bc, mut ppo, mut total, mut records) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
        for (round, chunk) in order.chunks(self.cfg.batch_observations).enumerate() {
            let r = round as u64;
            let observations = chunk
                .iter()
                .map(|&s| self.observation(s, &[TAG_OBSERVATION, e, r, s as u64]))
                .collect::<Result<Vec<_>>>()?;
            let mut buffer = gather(&observations, &self.params, &self.cfg, derive_seed(self.seed, &[TAG_GATHER, e, r]))?;
            let n = buffer.len();
            reward += buffer.mean_reward() * n as f64;
            let s = update_epoch(&mut buffer, &mut self.params, &mut self.opt, &self.cfg, lr, &mut update_rng)?;
            agreement += s.expert_agreement * n as f64;
            bc += s.bc_loss * n as f64;
            ppo += s.ppo_loss * n as f64;
            total += s.total_loss * n as f64;
            records += n;
        }
        self.epoch += 1;
        let n = records.max(1) as f64;
        Ok(EpochStats {
            epoch: self.epoch - 1,
            lr,
            bc_loss: bc / n,
            ppo_loss: ppo / n,
            total_loss: total / n,
            mean_reward: reward / n,
            expert_agreement: agreement / n,
            records,
            eval: None,
        })
    }
}
