use super::{BufferRecord, ReplayBuffer, TrainConfig};
use crate::env::{ActionVector, N_STEPS};
use crate::error::{Error, Result};
use crate::model::{
    argmax_action, backward, forward_batch, log_prob_entropy, log_softmax, AgentParams, OutputGrad,
    PolicyOutput,
};

/// Weights of the loss `bc_weight * l_bc + ppo_weight * l_ppo` and the PPO
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub bc_weight: f64,
    pub ppo_weight: f64,
    pub clip_ratio: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
}

impl LossSpec {
    pub fn combined(cfg: &TrainConfig) -> Self {
        Self {
            bc_weight: 1.0,
            ppo_weight: cfg.alpha,
            clip_ratio: cfg.clip_ratio,
            entropy_coeff: cfg.entropy_coeff,
            value_coeff: cfg.value_coeff,
        }
    }

    pub fn bc(cfg: &TrainConfig) -> Self {
        Self {
            ppo_weight: 0.0,
            ..Self::combined(cfg)
        }
    }

    pub fn ppo(cfg: &TrainConfig) -> Self {
        Self {
            bc_weight: 0.0,
            ppo_weight: 1.0,
            ..Self::combined(cfg)
        }
    }
}

/// Summed cross-entropy of the six sub-action distributions against the
/// expert's indices.
pub fn bc_loss(out: &PolicyOutput, expert: &ActionVector) -> f64 {
    out.rows()
        .iter()
        .zip(expert.indices())
        .map(|(row, i)| -log_softmax(row)[i])
        .sum()
}

/// `-min(ρ·A, clip(ρ, 1-ε, 1+ε)·A)`.
pub fn ppo_policy_term(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    -(ratio * advantage).min(clipped * advantage)
}

fn ppo_parts(out: &PolicyOutput, rec: &BufferRecord, spec: &LossSpec) -> Result<(f64, f64, f64, f64)> {
    let (logp, entropy) = log_prob_entropy(out, &rec.agent_action);
    let ratio = (logp - rec.old_logp).exp();
    if !ratio.is_finite() {
        return Err(Error::Numerical(format!("policy ratio is {ratio}")));
    }
    let loss = ppo_policy_term(ratio, rec.advantage, spec.clip_ratio) + spec.value_coeff * (out.value - rec.return_).powi(2)
        - spec.entropy_coeff * entropy;
    Ok((loss, ratio, logp, entropy))
}

/// Clipped policy term plus value regression minus entropy bonus for one
/// record.
pub fn ppo_loss(out: &PolicyOutput, rec: &BufferRecord, spec: &LossSpec) -> Result<f64> {
    Ok(ppo_parts(out, rec, spec)?.0)
}

/// Batch means of the loss terms and of the per-sub-action agreement between
/// the policy's most likely action and the expert label.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub bc: f64,
    pub ppo: f64,
    pub expert_agreement: f64,
    pub records: usize,
}

/// Loss of one record and its gradient with respect to the outputs, scaled
/// by `scale`.
fn record_grad(out: &PolicyOutput, rec: &BufferRecord, spec: &LossSpec, scale: f64) -> Result<(f64, f64, OutputGrad)> {
    let mut g = OutputGrad::default();
    let probs = out.probabilities();
    let bc = bc_loss(out, &rec.expert_action);
    if spec.bc_weight != 0.0 {
        let w = spec.bc_weight * scale;
        for ((row, p), idx) in g.rows_mut().into_iter().zip(&probs).zip(rec.expert_action.indices()) {
            for k in 0..N_STEPS {
                row[k] += w * (p[k] - f64::from(u8::from(k == idx)));
            }
        }
    }
    let ppo = if spec.ppo_weight != 0.0 {
        let (loss, ratio, _, _) = ppo_parts(out, rec, spec)?;
        let w = spec.ppo_weight * scale;
        let a = rec.advantage;
        let clipped = ratio.clamp(1.0 - spec.clip_ratio, 1.0 + spec.clip_ratio);
        // The clipped branch is constant in the parameters whenever it is the
        // strictly smaller one.
        let dlogp = if ratio * a <= clipped * a { -ratio * a } else { 0.0 };
        for ((row, p), idx) in g.rows_mut().into_iter().zip(&probs).zip(rec.agent_action.indices()) {
            let logp: [f64; N_STEPS] = p.map(f64::ln);
            let h: f64 = -(0..N_STEPS).map(|k| if p[k] > 0.0 { p[k] * logp[k] } else { 0.0 }).sum::<f64>();
            for k in 0..N_STEPS {
                let onehot = f64::from(u8::from(k == idx));
                let dent = if p[k] > 0.0 { p[k] * (logp[k] + h) } else { 0.0 };
                row[k] += w * (dlogp * (onehot - p[k]) + spec.entropy_coeff * dent);
            }
        }
        g.value += w * 2.0 * spec.value_coeff * (out.value - rec.return_);
        loss
    } else {
        0.0
    };
    Ok((bc, ppo, g))
}

/// Mean loss over the records at `batch` and its exact gradient.
///
/// Each distinct target in the batch is encoded once. The result is a pure
/// function of its inputs.
pub fn gradients(
    buffer: &ReplayBuffer,
    batch: &[usize],
    params: &AgentParams,
    spec: &LossSpec,
) -> Result<(LossStats, AgentParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut target_slot = vec![usize::MAX; buffer.targets.len()];
    let mut targets = Vec::new();
    let mut items = Vec::with_capacity(batch.len());
    for &i in batch {
        let rec = &buffer.records[i];
        if target_slot[rec.target] == usize::MAX {
            target_slot[rec.target] = targets.len();
            targets.push(&buffer.targets[rec.target]);
        }
        items.push((&rec.source, target_slot[rec.target]));
    }
    let (outs, cache) = forward_batch(params, &items, &targets);
    let scale = 1.0 / batch.len() as f64;
    let mut stats = LossStats {
        records: batch.len(),
        ..LossStats::default()
    };
    let mut douts = Vec::with_capacity(batch.len());
    for (&i, out) in batch.iter().zip(&outs) {
        let rec = &buffer.records[i];
        if !out.is_finite() {
            return Err(Error::Numerical("non-finite network output".into()));
        }
        let (bc, ppo, g) = record_grad(out, rec, spec, scale)?;
        stats.bc += bc * scale;
        stats.ppo += ppo * scale;
        stats.expert_agreement += argmax_action(out).matches(&rec.expert_action) as f64 / 6.0 * scale;
        douts.push(g);
    }
    stats.total = spec.bc_weight * stats.bc + spec.ppo_weight * stats.ppo;
    if !stats.total.is_finite() {
        return Err(Error::Numerical(format!("loss is {}", stats.total)));
    }
    let grads = backward(params, &cache, &douts);
    if !grads.is_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    Ok((stats, grads))
}
