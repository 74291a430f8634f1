//! The projection network: a small fully connected map from a base embedding
//! space into the space where a session's notion of similarity is learned.

mod checkpoint;
mod optim;
mod pretrain;
mod train;

pub use checkpoint::{from_checkpoint_json, to_checkpoint_json};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use pretrain::{nt_xent_eval, pretrain, PretrainConfig};
pub use train::{backprop_loss, train_step, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hidden widths and output width used when a session does not override them.
pub const DEFAULT_HIDDEN: &[usize] = &[128];
pub const DEFAULT_OUTPUT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// One affine layer. `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(|(row, b)| {
            let z = crate::vector::dot(row, x) + b;
            match self.activation {
                Activation::Relu => z.max(0.0),
                Activation::Identity => z,
            }
        }));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionNet {
    layers: Vec<Dense>,
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &ProjectionNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    /// Flattened in the same order as [`ProjectionNet::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub(crate) fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }
}

/// Activations recorded during a forward pass; `inputs[l]` feeds layer `l`.
pub(crate) struct Trace {
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ProjectionNet {
    /// He-uniform weights, zero biases, ReLU on hidden layers and identity on the output.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        if dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("layer dims must be >= 1, got {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                Dense {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights: (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    bias: vec![0.0; fan_out],
                    activation: if i + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// A single linear layer with identity weights and zero bias.
    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self {
            layers: vec![Dense {
                in_dim: dim,
                out_dim: dim,
                weights,
                bias: vec![0.0; dim],
                activation: Activation::Identity,
            }],
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let last = layers.last().ok_or(Error::Empty("network layers"))?;
        if last.activation != Activation::Identity {
            return Err(Error::InvalidConfig("final activation must be identity".into()));
        }
        for l in &layers {
            if l.in_dim == 0 || l.out_dim == 0 || l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::InvalidConfig(format!(
                    "layer {}x{} has {} weights and {} biases",
                    l.out_dim,
                    l.in_dim,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
        }
        for w in layers.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::DimMismatch {
                    expected: w[0].out_dim,
                    got: w[1].in_dim,
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.apply(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Project every row of a row-major `n x input_dim` matrix.
    pub fn forward_rows(&self, rows: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = self.input_dim();
        if !rows.len().is_multiple_of(d) {
            return Err(Error::DimMismatch {
                expected: d,
                got: rows.len() % d,
            });
        }
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            rows.par_chunks_exact(d).map(|r| self.forward(r)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            rows.chunks_exact(d).map(|r| self.forward(r)).collect()
        }
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut next = Vec::with_capacity(l.out_dim);
            l.apply(&cur, &mut next);
            inputs.push(cur);
            cur = next;
        }
        Ok(Trace { inputs, output: cur })
    }

    /// Accumulate `d loss / d params` into `grads` given `d loss / d output`.
    pub(crate) fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Gradients) {
        let mut delta = grad_out.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[li];
            // ReLU passes gradient where its output was positive.
            if layer.activation == Activation::Relu {
                let out = if li + 1 < self.layers.len() {
                    &trace.inputs[li + 1]
                } else {
                    &trace.output
                };
                for (d, o) in delta.iter_mut().zip(out) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (gw, gb) = &mut grads.layers[li];
            for (o, &dz) in delta.iter().enumerate() {
                gb[o] += dz;
                if dz != 0.0 {
                    crate::vector::axpy(dz, input, &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim]);
                }
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for (o, &dz) in delta.iter().enumerate() {
                    if dz != 0.0 {
                        crate::vector::axpy(dz, &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim], &mut prev);
                    }
                }
                delta = prev;
            }
        }
    }
}

impl Trace {
    pub(crate) fn output(&self) -> &[f64] {
        &self.output
    }
}
