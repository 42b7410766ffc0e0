//! The agent network.
//!
//! A shared per-point encoder (affine layers with ReLU in between, then a
//! coordinatewise max over points) embeds source and target. The two
//! embeddings are concatenated into the state, which feeds a rotation head and
//! a translation head, each predicting 3×11 logits. The value head reads the
//! concatenated middle layers of both action heads.
//!
//! Per-point layers are kernel-size-one convolutions, implemented as a shared
//! matrix product. All arithmetic is in `f64`.

mod checkpoint;
mod dist;
mod network;

pub use checkpoint::{load, load_expecting, save, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dist::{argmax_action, log_prob_entropy, log_softmax, sample_action, softmax};
pub use network::{
    backward, embed, encode, forward, forward_batch, forward_with_target, BatchCache, EncoderCache, OutputGrad,
    PolicyOutput,
};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{N_AXES, N_STEPS};
use crate::rng::seeded;

/// Logits per action head: three axes with eleven steps each.
pub const HEAD_OUTPUTS: usize = N_AXES * N_STEPS;

/// Layer widths of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    /// Per-point encoder widths; the last one is the embedding size.
    pub encoder: [usize; 3],
    /// Hidden widths of each action head.
    pub head: [usize; 2],
    pub value_hidden: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self::FULL
    }
}

impl Arch {
    /// 3→64→128→1024 encoder, 2048→512→256→33 heads, 512→256→1 value.
    pub const FULL: Arch = Arch {
        encoder: [64, 128, 1024],
        head: [512, 256],
        value_hidden: 256,
    };

    /// A width-reduced network for gradient checks and quick experiments.
    pub const TINY: Arch = Arch {
        encoder: [4, 8, 16],
        head: [8, 4],
        value_hidden: 4,
    };

    pub fn embedding(&self) -> usize {
        self.encoder[2]
    }

    pub fn state(&self) -> usize {
        2 * self.encoder[2]
    }

    /// `(inputs, outputs)` of each layer in checkpoint order.
    pub fn layer_dims(&self) -> [(usize, usize); 11] {
        let [e1, e2, e3] = self.encoder;
        let [h1, h2] = self.head;
        let s = self.state();
        [
            (3, e1),
            (e1, e2),
            (e2, e3),
            (s, h1),
            (h1, h2),
            (h2, HEAD_OUTPUTS),
            (s, h1),
            (h1, h2),
            (h2, HEAD_OUTPUTS),
            (2 * h2, self.value_hidden),
            (self.value_hidden, 1),
        ]
    }

    /// Recovers the widths from a list of layer shapes, checking that they chain.
    pub fn from_layer_dims(dims: &[(usize, usize)]) -> Option<Arch> {
        if dims.len() != 11 {
            return None;
        }
        let arch = Arch {
            encoder: [dims[0].1, dims[1].1, dims[2].1],
            head: [dims[3].1, dims[4].1],
            value_hidden: dims[9].1,
        };
        (arch.layer_dims() == dims).then_some(arch)
    }
}

/// An affine layer `y = x W + b` with `W` stored as inputs × outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }

    /// `x W + b` for one input vector, accumulated row by row of `W`.
    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs());
        let out = self.outputs();
        let w = self.w.as_slice().expect("standard layout");
        let mut y = self.b.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (yj, wj) in y.iter_mut().zip(&w[i * out..(i + 1) * out]) {
                    *yj += xi * wj;
                }
            }
        }
        y
    }

    /// `W d`: gradient with respect to the input given the output gradient.
    pub fn backward_input(&self, d: &[f64]) -> Vec<f64> {
        let out = self.outputs();
        let w = self.w.as_slice().expect("standard layout");
        (0..self.inputs())
            .map(|i| w[i * out..(i + 1) * out].iter().zip(d).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Accumulates `x ⊗ d` into `W` and `d` into `b`.
    pub fn accumulate_outer(&mut self, x: &[f64], d: &[f64]) {
        let out = self.outputs();
        let w = self.w.as_slice_mut().expect("standard layout");
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (wj, dj) in w[i * out..(i + 1) * out].iter_mut().zip(d) {
                    *wj += xi * dj;
                }
            }
        }
        for (bj, dj) in self.b.iter_mut().zip(d) {
            *bj += dj;
        }
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// All weights of the network. Also used as the container for gradients and
/// optimizer moments, which share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub arch: Arch,
    pub encoder: [Dense; 3],
    pub rot: [Dense; 3],
    pub trans: [Dense; 3],
    pub value: [Dense; 2],
}

impl AgentParams {
    pub fn zeros(arch: Arch) -> Self {
        let d = arch.layer_dims();
        let layer = |k: usize| Dense::zeros(d[k].0, d[k].1);
        Self {
            arch,
            encoder: [layer(0), layer(1), layer(2)],
            rot: [layer(3), layer(4), layer(5)],
            trans: [layer(6), layer(7), layer(8)],
            value: [layer(9), layer(10)],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero, deterministic in `seed`.
    pub fn init(arch: Arch, seed: u64) -> Self {
        let mut params = Self::zeros(arch);
        let mut rng = seeded(seed);
        for layer in params.layers_mut() {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            layer.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    pub fn layers(&self) -> [&Dense; 11] {
        let [e1, e2, e3] = &self.encoder;
        let [r1, r2, r3] = &self.rot;
        let [t1, t2, t3] = &self.trans;
        let [v1, v2] = &self.value;
        [e1, e2, e3, r1, r2, r3, t1, t2, t3, v1, v2]
    }

    pub fn layers_mut(&mut self) -> [&mut Dense; 11] {
        let [e1, e2, e3] = &mut self.encoder;
        let [r1, r2, r3] = &mut self.rot;
        let [t1, t2, t3] = &mut self.trans;
        let [v1, v2] = &mut self.value;
        [e1, e2, e3, r1, r2, r3, t1, t2, t3, v1, v2]
    }

    /// Flat views of every tensor: each layer's weights, then its biases.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("contiguous")])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| {
                let Dense { w, b } = l;
                [w.as_slice_mut().expect("standard layout"), b.as_slice_mut().expect("contiguous")]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    /// Reads parameter `k` in the flat order of [`AgentParams::tensors`].
    pub fn get(&self, mut k: usize) -> f64 {
        for t in self.tensors() {
            if k < t.len() {
                return t[k];
            }
            k -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut k: usize, v: f64) {
        for t in self.tensors_mut() {
            if k < t.len() {
                t[k] = v;
                return;
            }
            k -= t.len();
        }
        panic!("parameter index out of range")
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &AgentParams, c: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_arch_matches_layer_table() {
        let d = Arch::FULL.layer_dims();
        assert_eq!(d[0], (3, 64));
        assert_eq!(d[2], (128, 1024));
        assert_eq!(d[3], (2048, 512));
        assert_eq!(d[5], (256, 33));
        assert_eq!(d[9], (512, 256));
        assert_eq!(d[10], (256, 1));
        assert_eq!(Arch::from_layer_dims(&d), Some(Arch::FULL));
        let mut broken = d;
        broken[4] = (511, 256);
        assert_eq!(Arch::from_layer_dims(&broken), None);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = AgentParams::init(Arch::TINY, 3);
        let b = AgentParams::init(Arch::TINY, 3);
        let c = AgentParams::init(Arch::TINY, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.layers().iter().all(|l| l.b.iter().all(|&x| x == 0.0)));
        for l in a.layers() {
            let bound = 1.0 / (l.inputs() as f64).sqrt();
            assert!(l.w.iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn flat_access_round_trips() {
        let mut p = AgentParams::init(Arch::TINY, 1);
        let n = p.num_params();
        assert_eq!(n, p.tensors().iter().map(|t| t.len()).sum::<usize>());
        p.set(n - 1, 42.0);
        assert_eq!(p.get(n - 1), 42.0);
        assert_eq!(p.value[1].b[0], 42.0);
    }

    #[test]
    fn dense_vector_ops_match_ndarray() {
        let p = AgentParams::init(Arch::TINY, 2);
        let l = &p.rot[0];
        let x: Vec<f64> = (0..l.inputs()).map(|i| (i as f64 * 0.37).sin()).collect();
        let want = ndarray::Array1::from(x.clone()).dot(&l.w) + &l.b;
        let got = l.forward_vec(&x);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let d: Vec<f64> = (0..l.outputs()).map(|i| (i as f64).cos()).collect();
        let want = l.w.dot(&ndarray::Array1::from(d.clone()));
        for (a, b) in l.backward_input(&d).iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
