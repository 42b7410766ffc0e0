//! Categorical distributions over the eleven steps of each sub-action.

use rand::Rng;

use super::PolicyOutput;
use crate::env::{ActionVector, N_AXES, N_STEPS};

pub fn softmax(logits: &[f64; N_STEPS]) -> [f64; N_STEPS] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|l| (l - m).exp());
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

pub fn log_softmax(logits: &[f64; N_STEPS]) -> [f64; N_STEPS] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.map(|l| l - lse)
}

/// Joint log-probability of `action` (sum over the six independent
/// sub-actions) and the summed entropy of the six distributions.
pub fn log_prob_entropy(out: &PolicyOutput, action: &ActionVector) -> (f64, f64) {
    let mut log_prob = 0.0;
    let mut entropy = 0.0;
    for (row, idx) in out.rows().iter().zip(action.indices()) {
        let lp = log_softmax(row);
        log_prob += lp[idx];
        entropy -= lp.iter().map(|l| l.exp() * l).sum::<f64>();
    }
    (log_prob, entropy)
}

/// Inverse-CDF draw from one distribution; a single uniform per call.
fn sample_row(p: &[f64; N_STEPS], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the cumulative sum just below one.
    p.iter().rposition(|&q| q > 0.0).unwrap_or(N_STEPS - 1)
}

/// Draws each sub-action independently, rotation axes first.
pub fn sample_action(out: &PolicyOutput, rng: &mut impl Rng) -> ActionVector {
    let mut idx = [0usize; 2 * N_AXES];
    for (slot, row) in idx.iter_mut().zip(out.rows()) {
        *slot = sample_row(&softmax(row), rng);
    }
    ActionVector::from_indices(idx).expect("sampled indices are in range")
}

fn argmax(row: &[f64; N_STEPS]) -> usize {
    let mut best = 0;
    for i in 1..N_STEPS {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

/// Most likely step per sub-action; ties go to the lowest index.
pub fn argmax_action(out: &PolicyOutput) -> ActionVector {
    let mut idx = [0usize; 2 * N_AXES];
    for (slot, row) in idx.iter_mut().zip(out.rows()) {
        *slot = argmax(row);
    }
    ActionVector::from_indices(idx).expect("argmax indices are in range")
}
