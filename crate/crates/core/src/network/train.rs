use serde::{Deserialize, Serialize};

use super::{Gradients, Optimizer, ProjectionNet};
use crate::losses::{self, LossKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Optimizer steps per update.
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            tau: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be >= 0".into()));
        }
        losses::LossConfig { tau: self.tau }.validate()
    }
}

/// Loss over projected batches and its gradient w.r.t. every network parameter.
pub fn backprop_loss<V: AsRef<[f64]>>(
    net: &ProjectionNet,
    similar: &[V],
    dissimilar: &[V],
    tau: f64,
    kind: LossKind,
) -> Result<(f64, Gradients)> {
    if similar.len() < 2 || dissimilar.len() < kind.min_dissimilar() {
        return Err(Error::BatchTooSmall {
            similar: similar.len(),
            dissimilar: dissimilar.len(),
            need_similar: 2,
            need_dissimilar: kind.min_dissimilar(),
        });
    }
    let st = similar
        .iter()
        .map(|x| net.forward_traced(x.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let dt = dissimilar
        .iter()
        .map(|x| net.forward_traced(x.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let sp: Vec<&[f64]> = st.iter().map(|t| t.output()).collect();
    let dp: Vec<&[f64]> = dt.iter().map(|t| t.output()).collect();
    let lg = losses::loss_with_grad(kind, &sp, &dp, tau)?;
    let mut grads = Gradients::zeros_like(net);
    for (t, g) in st.iter().zip(&lg.grad_similar) {
        net.backward(t, g, &mut grads);
    }
    for (t, g) in dt.iter().zip(&lg.grad_dissimilar) {
        net.backward(t, g, &mut grads);
    }
    Ok((lg.value, grads))
}

/// One optimizer step on the selected loss. Returns the loss before the step.
pub fn train_step<V: AsRef<[f64]>>(
    net: &mut ProjectionNet,
    similar: &[V],
    dissimilar: &[V],
    cfg: &TrainConfig,
    kind: LossKind,
    opt: &mut Optimizer,
) -> Result<f64> {
    let (loss, grads) = backprop_loss(net, similar, dissimilar, cfg.tau, kind)?;
    opt.step(net, &grads);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::OptimizerConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ProjectionNet::new(6, &[4], 3, 1).unwrap();
        let before = net.clone();
        let cfg = TrainConfig { learning_rate: 0.0, ..Default::default() };
        let mut opt = Optimizer::new(OptimizerConfig { learning_rate: 0.0, ..Default::default() }, &net);
        let s = batch(&mut rng, 3, 6);
        let d = batch(&mut rng, 2, 6);
        let loss = train_step(&mut net, &s, &d, &cfg, LossKind::Scloss, &mut opt).unwrap();
        assert!(loss.is_finite());
        assert_eq!(net, before);
    }

    #[test]
    fn too_small_batches_error() {
        let mut net = ProjectionNet::new(2, &[], 2, 1).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::default(), &net);
        let cfg = TrainConfig::default();
        let one = vec![vec![1.0, 0.0]];
        let two = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            train_step(&mut net, &one, &two, &cfg, LossKind::Scloss, &mut opt),
            Err(Error::BatchTooSmall { .. })
        ));
        assert!(matches!(
            train_step(&mut net, &two, &one, &cfg, LossKind::SclossAlt, &mut opt),
            Err(Error::BatchTooSmall { .. })
        ));
    }

    #[test]
    fn loss_falls_on_separable_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![1.0 + rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.5, -0.2, 0.1, 0.0])
            .collect();
        let d: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![rng.random_range(-0.3..0.3), 1.0 + rng.random_range(-0.3..0.3), 0.5, -0.2, 0.1, 0.0])
            .collect();
        for kind in [LossKind::Scloss, LossKind::SclossAlt] {
            let mut net = ProjectionNet::new(6, &[8], 4, 2).unwrap();
            let cfg = TrainConfig { learning_rate: 1e-2, ..Default::default() };
            let mut opt = Optimizer::new(OptimizerConfig { learning_rate: 1e-2, ..Default::default() }, &net);
            let first = train_step(&mut net, &s, &d, &cfg, kind, &mut opt).unwrap();
            let mut last = first;
            for _ in 0..99 {
                last = train_step(&mut net, &s, &d, &cfg, kind, &mut opt).unwrap();
            }
            assert!(last < first, "{kind:?}: {last} !< {first}");
        }
    }
}
