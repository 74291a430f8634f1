//! Self-supervised warm start: NT-Xent where the two views of a sample are
//! independent Gaussian perturbations of its base embedding.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Gradients, Optimizer, OptimizerConfig, ProjectionNet};
use crate::corpus::EmbeddingView;
use crate::losses;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub tau: f64,
    pub learning_rate: f64,
    pub noise_sigma: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Add the positive pair to the softmax denominator (the usual SimCLR form).
    pub include_positive_in_denominator: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            learning_rate: 1e-3,
            noise_sigma: 0.1,
            batch_size: 32,
            steps: 500,
            seed: 0,
            weight_decay: 0.0,
            include_positive_in_denominator: false,
        }
    }
}

impl PretrainConfig {
    fn validate(&self, view: &EmbeddingView) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "pretrain batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if view.rows() < 2 {
            return Err(Error::InvalidConfig("pretrain needs at least 2 rows".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        losses::LossConfig { tau: self.tau }.validate()
    }
}

fn augmented_batch(view: &EmbeddingView, batch: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let picks = index::sample(rng, view.rows(), batch.min(view.rows()));
    let mut out = Vec::with_capacity(2 * picks.len());
    for i in picks.iter() {
        let row = view.row_f64(i);
        for _ in 0..2 {
            out.push(row.iter().map(|x| x + normal.sample(rng)).collect());
        }
    }
    out
}

fn nt_xent_grads(net: &ProjectionNet, views: &[Vec<f64>], cfg: &PretrainConfig) -> Result<(f64, Gradients)> {
    let traces = views.iter().map(|v| net.forward_traced(v)).collect::<Result<Vec<_>>>()?;
    let outs: Vec<Vec<f64>> = traces.iter().map(|t| t.output().to_vec()).collect();
    let (loss, g) = losses::nt_xent_with_grad(&outs, cfg.tau, cfg.include_positive_in_denominator)?;
    let mut grads = Gradients::zeros_like(net);
    for (t, gi) in traces.iter().zip(&g) {
        net.backward(t, gi, &mut grads);
    }
    Ok((loss, grads))
}

/// Train `net` for `cfg.steps` NT-Xent steps over rows of `view`.
pub fn pretrain(mut net: ProjectionNet, view: &EmbeddingView, cfg: &PretrainConfig) -> Result<ProjectionNet> {
    cfg.validate(view)?;
    if view.dim() != net.input_dim() {
        return Err(Error::DimMismatch {
            expected: net.input_dim(),
            got: view.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(
        OptimizerConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
        &net,
    );
    for _ in 0..cfg.steps {
        let batch = augmented_batch(view, cfg.batch_size, cfg.noise_sigma, &mut rng);
        let (_, grads) = nt_xent_grads(&net, &batch, cfg)?;
        opt.step(&mut net, &grads);
    }
    Ok(net)
}

/// NT-Xent on a fixed augmented batch drawn from `eval_seed`, for tracking progress.
pub fn nt_xent_eval(net: &ProjectionNet, view: &EmbeddingView, cfg: &PretrainConfig, eval_seed: u64) -> Result<f64> {
    cfg.validate(view)?;
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let batch = augmented_batch(view, cfg.batch_size, cfg.noise_sigma, &mut rng);
    Ok(nt_xent_grads(net, &batch, cfg)?.0)
}
