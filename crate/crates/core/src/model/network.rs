use ndarray::{Array2, Axis};

use super::{AgentParams, Dense};
use crate::env::{N_AXES, N_STEPS};
use crate::geometry::PointCloud;
use crate::par;

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Zeroes gradient entries whose activation was clipped by the ReLU.
fn relu_mask(d: &mut [f64], activation: &[f64]) {
    for (g, a) in d.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Intermediate activations of the per-point encoder for one cloud.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    /// Row that attains the maximum of each output channel.
    argmax: Vec<usize>,
    pub feature: Vec<f64>,
}

fn cloud_matrix(cloud: &PointCloud) -> Array2<f64> {
    let pts = cloud.points();
    Array2::from_shape_fn((pts.len(), 3), |(i, k)| pts[i][k])
}

fn affine(x: &Array2<f64>, layer: &Dense) -> Array2<f64> {
    let mut z = x.dot(&layer.w);
    z += &layer.b;
    z
}

pub fn encode(params: &AgentParams, cloud: &PointCloud) -> EncoderCache {
    let input = cloud_matrix(cloud);
    let [l1, l2, l3] = &params.encoder;
    let h1 = affine(&input, l1).mapv_into(relu);
    let h2 = affine(&h1, l2).mapv_into(relu);
    let z3 = affine(&h2, l3);
    let width = l3.outputs();
    let mut feature = vec![f64::NEG_INFINITY; width];
    let mut argmax = vec![0usize; width];
    for (i, row) in z3.outer_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > feature[j] {
                feature[j] = v;
                argmax[j] = i;
            }
        }
    }
    EncoderCache {
        input,
        h1,
        h2,
        argmax,
        feature,
    }
}

/// Global feature of a cloud: the encoder followed by a max over points.
pub fn embed(cloud: &PointCloud, params: &AgentParams) -> Vec<f64> {
    encode(params, cloud).feature
}

fn encoder_backward(params: &AgentParams, cache: &EncoderCache, dfeature: &[f64]) -> [Dense; 3] {
    let [_, l2, l3] = &params.encoder;
    let (n, e2) = cache.h2.dim();
    let mut g3 = Dense::zeros(l3.inputs(), l3.outputs());
    let mut dh2 = Array2::<f64>::zeros((n, e2));
    for (j, &d) in dfeature.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let r = cache.argmax[j];
        for k in 0..e2 {
            g3.w[[k, j]] += cache.h2[[r, k]] * d;
            dh2[[r, k]] += l3.w[[k, j]] * d;
        }
        g3.b[j] += d;
    }
    ndarray::Zip::from(&mut dh2).and(&cache.h2).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    let g2 = Dense {
        w: cache.h1.t().dot(&dh2),
        b: dh2.sum_axis(Axis(0)),
    };
    let mut dh1 = dh2.dot(&l2.w.t());
    ndarray::Zip::from(&mut dh1).and(&cache.h1).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    let g1 = Dense {
        w: cache.input.t().dot(&dh1),
        b: dh1.sum_axis(Axis(0)),
    };
    [g1, g2, g3]
}

/// Network output for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub rot_logits: [[f64; N_STEPS]; N_AXES],
    pub trans_logits: [[f64; N_STEPS]; N_AXES],
    pub value: f64,
}

impl PolicyOutput {
    /// Logit rows in sub-action order (rx, ry, rz, tx, ty, tz).
    pub fn rows(&self) -> [&[f64; N_STEPS]; 2 * N_AXES] {
        let r = &self.rot_logits;
        let t = &self.trans_logits;
        [&r[0], &r[1], &r[2], &t[0], &t[1], &t[2]]
    }

    /// Softmax of every row.
    pub fn probabilities(&self) -> Vec<[f64; N_STEPS]> {
        self.rows().iter().map(|r| super::softmax(r)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.rows().iter().all(|r| r.iter().all(|x| x.is_finite())) && self.value.is_finite()
    }
}

fn reshape_logits(v: &[f64]) -> [[f64; N_STEPS]; N_AXES] {
    let mut out = [[0.0; N_STEPS]; N_AXES];
    for (a, row) in out.iter_mut().enumerate() {
        row.copy_from_slice(&v[a * N_STEPS..(a + 1) * N_STEPS]);
    }
    out
}

#[derive(Debug, Clone)]
struct HeadCache {
    state: Vec<f64>,
    rot: [Vec<f64>; 2],
    trans: [Vec<f64>; 2],
    value_in: Vec<f64>,
    value_hidden: Vec<f64>,
}

fn action_head(layers: &[Dense; 3], state: &[f64]) -> ([Vec<f64>; 2], Vec<f64>) {
    let mut a1 = layers[0].forward_vec(state);
    a1.iter_mut().for_each(|x| *x = relu(*x));
    let mut a2 = layers[1].forward_vec(&a1);
    a2.iter_mut().for_each(|x| *x = relu(*x));
    let logits = layers[2].forward_vec(&a2);
    ([a1, a2], logits)
}

fn heads(params: &AgentParams, state: Vec<f64>) -> (PolicyOutput, HeadCache) {
    let (rot, rot_logits) = action_head(&params.rot, &state);
    let (trans, trans_logits) = action_head(&params.trans, &state);
    let value_in: Vec<f64> = rot[1].iter().chain(&trans[1]).copied().collect();
    let mut value_hidden = params.value[0].forward_vec(&value_in);
    value_hidden.iter_mut().for_each(|x| *x = relu(*x));
    let value = params.value[1].forward_vec(&value_hidden)[0];
    let out = PolicyOutput {
        rot_logits: reshape_logits(&rot_logits),
        trans_logits: reshape_logits(&trans_logits),
        value,
    };
    (
        out,
        HeadCache {
            state,
            rot,
            trans,
            value_in,
            value_hidden,
        },
    )
}

fn state_of(source: &EncoderCache, target: &EncoderCache) -> Vec<f64> {
    source.feature.iter().chain(&target.feature).copied().collect()
}

/// Everything needed to backpropagate through a batch of observations.
/// Records refer to their target by index so that each distinct target is
/// encoded once.
#[derive(Debug, Clone)]
pub struct BatchCache {
    targets: Vec<EncoderCache>,
    records: Vec<(EncoderCache, usize, HeadCache)>,
}

impl BatchCache {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn forward(source: &PointCloud, target: &PointCloud, params: &AgentParams) -> PolicyOutput {
    let target = encode(params, target);
    forward_with_target(params, source, &target)
}

/// Batched forward pass keeping activations for [`backward`].
/// `items` pairs each source cloud with an index into `targets`.
pub fn forward_batch(
    params: &AgentParams,
    items: &[(&PointCloud, usize)],
    targets: &[&PointCloud],
) -> (Vec<PolicyOutput>, BatchCache) {
    assert!(items.iter().all(|(_, t)| *t < targets.len()), "target index out of range");
    let targets = par::map(targets, |t| encode(params, t));
    let results = par::map(items, |(src, t)| {
        let source = encode(params, src);
        let (out, head) = heads(params, state_of(&source, &targets[*t]));
        (out, (source, *t, head))
    });
    let (outs, records) = results.into_iter().unzip();
    (outs, BatchCache { targets, records })
}

/// Forward pass reusing an already encoded target. Bitwise identical to
/// [`forward`] on the same inputs.
pub fn forward_with_target(params: &AgentParams, source: &PointCloud, target: &EncoderCache) -> PolicyOutput {
    let source = encode(params, source);
    heads(params, state_of(&source, target)).0
}

/// Gradient of a scalar loss with respect to one [`PolicyOutput`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputGrad {
    pub rot: [[f64; N_STEPS]; N_AXES],
    pub trans: [[f64; N_STEPS]; N_AXES],
    pub value: f64,
}

impl OutputGrad {
    /// Mutable rows in sub-action order (rx, ry, rz, tx, ty, tz).
    pub fn rows_mut(&mut self) -> [&mut [f64; N_STEPS]; 2 * N_AXES] {
        let [r0, r1, r2] = &mut self.rot;
        let [t0, t1, t2] = &mut self.trans;
        [r0, r1, r2, t0, t1, t2]
    }

    pub fn scaled(mut self, c: f64) -> Self {
        for row in self.rows_mut() {
            row.iter_mut().for_each(|x| *x *= c);
        }
        self.value *= c;
        self
    }
}

fn action_head_backward(
    layers: &[Dense; 3],
    grads: &mut [Dense; 3],
    cache: &[Vec<f64>; 2],
    state: &[f64],
    dlogits: &[f64],
    dhidden_from_value: &[f64],
    dstate: &mut [f64],
) {
    grads[2].accumulate_outer(&cache[1], dlogits);
    let mut da2 = layers[2].backward_input(dlogits);
    for (d, v) in da2.iter_mut().zip(dhidden_from_value) {
        *d += v;
    }
    relu_mask(&mut da2, &cache[1]);
    grads[1].accumulate_outer(&cache[0], &da2);
    let mut da1 = layers[1].backward_input(&da2);
    relu_mask(&mut da1, &cache[0]);
    grads[0].accumulate_outer(state, &da1);
    for (d, v) in dstate.iter_mut().zip(layers[0].backward_input(&da1)) {
        *d += v;
    }
}

/// Sums the parameter gradients of every record given the gradient of the
/// loss with respect to each record's output.
///
/// Head gradients are accumulated in record order; encoder gradients are
/// computed per cloud (in parallel when enabled) and then summed in a fixed
/// order, so the result does not depend on the thread count.
pub fn backward(params: &AgentParams, cache: &BatchCache, douts: &[OutputGrad]) -> AgentParams {
    assert_eq!(cache.records.len(), douts.len());
    let mut g = params.zeros_like();
    let h2 = params.arch.head[1];
    let e = params.arch.embedding();
    let mut dsources = Vec::with_capacity(douts.len());
    let mut dtargets = vec![vec![0.0; e]; cache.targets.len()];
    for ((_, t, hc), dout) in cache.records.iter().zip(douts) {
        g.value[1].accumulate_outer(&hc.value_hidden, &[dout.value]);
        let mut dvh = params.value[1].backward_input(&[dout.value]);
        relu_mask(&mut dvh, &hc.value_hidden);
        g.value[0].accumulate_outer(&hc.value_in, &dvh);
        let dvalue_in = params.value[0].backward_input(&dvh);

        let mut dstate = vec![0.0; hc.state.len()];
        let drot: Vec<f64> = dout.rot.iter().flatten().copied().collect();
        let dtrans: Vec<f64> = dout.trans.iter().flatten().copied().collect();
        action_head_backward(&params.rot, &mut g.rot, &hc.rot, &hc.state, &drot, &dvalue_in[..h2], &mut dstate);
        action_head_backward(&params.trans, &mut g.trans, &hc.trans, &hc.state, &dtrans, &dvalue_in[h2..], &mut dstate);
        for (a, b) in dtargets[*t].iter_mut().zip(&dstate[e..]) {
            *a += b;
        }
        dstate.truncate(e);
        dsources.push(dstate);
    }

    let mut jobs: Vec<(&EncoderCache, &[f64])> = Vec::with_capacity(dsources.len() + dtargets.len());
    jobs.extend(cache.records.iter().zip(&dsources).map(|((c, _, _), d)| (c, d.as_slice())));
    jobs.extend(cache.targets.iter().zip(&dtargets).map(|(c, d)| (c, d.as_slice())));
    let encoder_grads = par::map(&jobs, |(c, d)| encoder_backward(params, c, d));
    for grads in &encoder_grads {
        for (dst, src) in g.encoder.iter_mut().zip(grads) {
            dst.w += &src.w;
            dst.b += &src.b;
        }
    }
    g
}
