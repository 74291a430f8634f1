//! Relevance-feedback sessions and the rankers behind them.

mod baselines;
mod events;
mod session;

pub use baselines::{centroid_ranking, random_recommend, rank_by_scores, rocchio_recommend, RocchioState};
pub use events::{read_events_jsonl, write_events_jsonl, FeedbackEvent};
pub use session::{FeedbackOutcome, ScoreTable, Session, SessionStatus};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::losses::LossKind;
use crate::network::{OptimizerKind, DEFAULT_HIDDEN, DEFAULT_OUTPUT};
use crate::{Error, Result};

/// Which recommender drives a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Online-trained projection network, centroid scoring, anchoring and exploration.
    Contrastive,
    /// Classical Rocchio query refinement in the base space.
    Rocchio,
    /// Centroid scoring in the base space with no learned projection.
    Centroid,
    /// Uniformly random unseen images.
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Contrastive,
        Algorithm::Rocchio,
        Algorithm::Centroid,
        Algorithm::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Contrastive => "contrastive",
            Algorithm::Rocchio => "rocchio",
            Algorithm::Centroid => "centroid",
            Algorithm::Random => "random",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RocchioParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RocchioParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.75,
            gamma: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Top-scoring slots per batch.
    pub k: usize,
    /// Exploration slots per batch.
    pub u: usize,
    /// Previously labelled images mixed into each training batch, per side.
    pub prev_samp: usize,
    pub epochs: usize,
    pub train_every: usize,
    pub explore_history_every: usize,
    pub loss_kind: LossKind,
    pub tau: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Base view fed to the network when `view_weights` is unset.
    pub view: String,
    /// Weighted concatenation of several views, in name order.
    pub view_weights: Option<BTreeMap<String, f64>>,
    pub max_iterations: usize,
    pub seed: u64,
    pub rocchio: RocchioParams,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: 12,
            u: 4,
            prev_samp: 24,
            epochs: 10,
            train_every: 2,
            explore_history_every: 3,
            loss_kind: LossKind::Scloss,
            tau: 0.5,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            hidden: DEFAULT_HIDDEN.to_vec(),
            output_dim: DEFAULT_OUTPUT,
            view: "mix".into(),
            view_weights: None,
            max_iterations: 1000,
            seed: 0,
            rocchio: RocchioParams::default(),
        }
    }
}

impl EngineConfig {
    pub fn batch_size(&self) -> usize {
        self.k + self.u
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if self.epochs == 0 || self.train_every == 0 || self.explore_history_every == 0 {
            return bad("epochs and periods must be >= 1");
        }
        if !(self.tau > 0.0) || !(self.learning_rate >= 0.0) {
            return bad("tau must be > 0 and learning_rate >= 0");
        }
        if self.output_dim == 0 || self.hidden.contains(&0) {
            return bad("network widths must be >= 1");
        }
        let r = self.rocchio;
        if r.alpha < 0.0 || r.beta < 0.0 || r.gamma < 0.0 {
            return bad("rocchio weights must be >= 0");
        }
        if let Some(w) = &self.view_weights {
            if w.is_empty() || w.values().any(|x| !(*x >= 0.0)) || w.values().all(|x| *x == 0.0) {
                return bad("view_weights must be nonnegative with at least one positive");
            }
        }
        Ok(())
    }
}

/// Row-major `n x dim` base embeddings in `f64`, as fed to the rankers.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseEmbeddings {
    dim: usize,
    data: Vec<f64>,
}

impl BaseEmbeddings {
    pub fn from_corpus(corpus: &Corpus, cfg: &EngineConfig) -> Result<Self> {
        let parts: Vec<(&crate::corpus::EmbeddingView, f64)> = match &cfg.view_weights {
            Some(w) => w
                .iter()
                .map(|(name, &wt)| Ok((corpus.view(name)?, wt)))
                .collect::<Result<_>>()?,
            None => vec![(corpus.view(&cfg.view)?, 1.0)],
        };
        let dim: usize = parts.iter().map(|(v, _)| v.dim()).sum();
        let mut data = Vec::with_capacity(corpus.len() * dim);
        for i in 0..corpus.len() {
            for (v, w) in &parts {
                data.extend(v.row(i).iter().map(|&x| x as f64 * w));
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidConfig("base embeddings shape".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub type SharedBase = Arc<BaseEmbeddings>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::tiny;

    #[test]
    fn weighted_concatenation() {
        let c = tiny(3);
        let cfg = EngineConfig {
            view_weights: Some([("v".to_string(), 2.0)].into()),
            ..Default::default()
        };
        let b = BaseEmbeddings::from_corpus(&c, &cfg).unwrap();
        assert_eq!(b.row(2), &[4.0, 2.0]);
        let cfg = EngineConfig {
            view: "missing".into(),
            ..Default::default()
        };
        assert!(matches!(BaseEmbeddings::from_corpus(&c, &cfg), Err(Error::UnknownView(_))));
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        assert!(EngineConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(EngineConfig { train_every: 0, ..Default::default() }.validate().is_err());
        assert_eq!(EngineConfig::default().batch_size(), 16);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("faster".parse::<Algorithm>().is_err());
    }
}
