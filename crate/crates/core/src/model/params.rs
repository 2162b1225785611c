//! Parameter layout of the forecaster.
//!
//! [`Parameters`] is generic over its leaf type so the same structure holds
//! weights (`Matrix`), tape handles (`Var`), gradients and optimizer
//! moments. Traversal order is fixed and is the order used by checkpoints
//! and the optimizer.

use alloc::vec::Vec;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Affine map `x · weight + bias`; `weight` is `in × out`, `bias` is `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: T,
    pub bias: T,
}

/// Fully connected stack: ReLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct FcStack<T> {
    pub layers: Vec<Linear<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    /// `E`, `N × d_e`.
    pub node_embeddings: T,
    /// `FC⁽⁰⁾` of the spatial field, `d_h → d_h`.
    pub spatial_in: FcStack<T>,
    /// `W_s`, `d_h × d_h`.
    pub spatial_mix: T,
    /// `FC⁽¹⁾` of the spatial field, `d_h → d_h·d_x`.
    pub spatial_out: FcStack<T>,
    /// One stack per node (or a single shared one), `d_z → d_z·d_h`.
    pub temporal: Vec<FcStack<T>>,
    /// `H(0) = FC(X̃(t₀))`, `d_x → d_h`.
    pub init_hidden: Linear<T>,
    /// `Z(0) = FC(H(0))`, `d_h → d_z`.
    pub init_temporal: Linear<T>,
    /// Per-node forecast head, `d_z → 1`.
    pub head: Vec<Linear<T>>,
}

impl<T> Linear<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Linear<U> {
        Linear { weight: f(&self.weight), bias: f(&self.bias) }
    }
}

impl<T> FcStack<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> FcStack<U> {
        FcStack { layers: self.layers.iter().map(|l| l.map(f)).collect() }
    }
}

impl<T> Parameters<T> {
    /// Applies `f` to every leaf in canonical order.
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Parameters<U> {
        let f = &mut f;
        Parameters {
            node_embeddings: f(&self.node_embeddings),
            spatial_in: self.spatial_in.map(f),
            spatial_mix: f(&self.spatial_mix),
            spatial_out: self.spatial_out.map(f),
            temporal: self.temporal.iter().map(|s| s.map(f)).collect(),
            init_hidden: self.init_hidden.map(f),
            init_temporal: self.init_temporal.map(f),
            head: self.head.iter().map(|l| l.map(f)).collect(),
        }
    }

    /// Leaves in canonical order, tagged with their group name.
    pub fn grouped(&self) -> Vec<(&'static str, &T)> {
        let mut out = Vec::new();
        out.push(("embeddings", &self.node_embeddings));
        fn stack<'a, T>(out: &mut Vec<(&'static str, &'a T)>, s: &'a FcStack<T>, g: &'static str) {
            for l in &s.layers {
                out.push((g, &l.weight));
                out.push((g, &l.bias));
            }
        }
        stack(&mut out, &self.spatial_in, "spatial");
        out.push(("spatial", &self.spatial_mix));
        stack(&mut out, &self.spatial_out, "spatial");
        for s in &self.temporal {
            stack(&mut out, s, "temporal");
        }
        for l in [&self.init_hidden, &self.init_temporal] {
            out.push(("init", &l.weight));
            out.push(("init", &l.bias));
        }
        for l in &self.head {
            out.push(("head", &l.weight));
            out.push(("head", &l.bias));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.grouped().into_iter().map(|(_, t)| t)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        let mut out: Vec<&mut T> = Vec::new();
        out.push(&mut self.node_embeddings);
        fn stack<'a, T>(out: &mut Vec<&'a mut T>, s: &'a mut FcStack<T>) {
            for l in &mut s.layers {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        stack(&mut out, &mut self.spatial_in);
        out.push(&mut self.spatial_mix);
        stack(&mut out, &mut self.spatial_out);
        for s in &mut self.temporal {
            stack(&mut out, s);
        }
        for l in [&mut self.init_hidden, &mut self.init_temporal] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for l in &mut self.head {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.into_iter()
    }
}

fn linear_init(input: usize, output: usize, rng: &mut SeededRng) -> Linear<Matrix> {
    let bound = 1.0 / libm::sqrt(input as f64);
    let mut draw = |r, c| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform_range(-bound, bound)).collect());
    let weight = draw(input, output);
    let bias = draw(1, output);
    Linear { weight, bias }
}

fn stack_init(input: usize, hidden: usize, layers: usize, output: usize, rng: &mut SeededRng) -> FcStack<Matrix> {
    if layers == 0 {
        return FcStack { layers: alloc::vec![linear_init(input, output, rng)] };
    }
    let mut out = Vec::with_capacity(layers + 1);
    out.push(linear_init(input, hidden, rng));
    for _ in 1..layers {
        out.push(linear_init(hidden, hidden, rng));
    }
    out.push(linear_init(hidden, output, rng));
    FcStack { layers: out }
}

impl Parameters<Matrix> {
    /// Weights and biases uniform in `±1/√fan_in`; embeddings `0.1·N(0, 1)`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let n = config.n_channels;
        let (dh, dz, dx) = (config.hidden_h, config.hidden_z, config.control_dim());
        let (fc, layers) = (config.fc_hidden, config.fc_layers);
        let node_embeddings = Matrix::from_vec(n, config.embed_dim, (0..n * config.embed_dim).map(|_| 0.1 * rng.normal()).collect());
        let spatial_in = stack_init(dh, fc, layers, dh, &mut rng);
        let mix_bound = 1.0 / libm::sqrt(dh as f64);
        let spatial_mix = Matrix::from_vec(dh, dh, (0..dh * dh).map(|_| rng.uniform_range(-mix_bound, mix_bound)).collect());
        let spatial_out = stack_init(dh, fc, layers, dh * dx, &mut rng);
        let temporal = (0..config.temporal_stacks()).map(|_| stack_init(dz, fc, layers, dz * dh, &mut rng)).collect();
        let init_hidden = linear_init(dx, dh, &mut rng);
        let init_temporal = linear_init(dh, dz, &mut rng);
        let head = (0..n).map(|_| linear_init(dz, 1, &mut rng)).collect();
        Parameters { node_embeddings, spatial_in, spatial_mix, spatial_out, temporal, init_hidden, init_temporal, head }
    }

    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::init(config, 0).map(|m| Matrix::zeros(m.rows(), m.cols()))
    }

    /// Rebuilds parameters from matrices in canonical order, checking shapes.
    pub fn from_flat(config: &ModelConfig, mut mats: Vec<Matrix>) -> Result<Self> {
        let template = Self::zeros(config);
        let expected: Vec<(usize, usize)> = template.iter().map(|m| m.shape()).collect();
        if expected.len() != mats.len() {
            return Err(Error::Structural(alloc::format!(
                "expected {} parameter matrices, found {}",
                expected.len(),
                mats.len()
            )));
        }
        for (i, (m, shape)) in mats.iter().zip(&expected).enumerate() {
            if m.shape() != *shape {
                return Err(Error::Structural(alloc::format!(
                    "parameter {i} has shape {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
        }
        mats.reverse();
        Ok(template.map(|_| mats.pop().expect("count checked")))
    }

    pub fn count(&self) -> usize {
        self.iter().map(Matrix::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(Matrix::is_finite)
    }
}
