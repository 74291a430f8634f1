//! A deterministic stand-in for a human user looking for one hidden target.
//!
//! The simulated user judges each shown image by a weighted mean of per-view
//! cosine similarities to the target and calls it similar when that value is
//! strictly above an adaptive threshold.

mod experiment;
mod run;

pub use experiment::{run_experiment, CellSummary, ExperimentConfig, ExperimentReport, RunSummary, ViewCombo};
pub use run::{run_simulation, run_simulation_with, simulate_session, LogLine, SimRecord, SimulationLog};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::vector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    /// View name to nonnegative weight.
    pub weights: BTreeMap<String, f64>,
    pub threshold_sample_size: usize,
    pub update_period: usize,
    pub decay: f64,
    pub blend: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Fixed target id; drawn from the seed when unset.
    pub target: Option<String>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            weights: [("facenet", 1.0), ("hog", 1.0), ("mix", 1.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            threshold_sample_size: 1000,
            update_period: 15,
            decay: 0.95,
            blend: 0.05,
            max_iterations: 1000,
            seed: 0,
            target: None,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.weights.values().any(|w| !(*w >= 0.0 && w.is_finite())) || !self.weights.values().any(|w| *w > 0.0) {
            return bad("simulator weights must be nonnegative with at least one positive");
        }
        if self.update_period == 0 {
            return bad("update_period must be >= 1");
        }
        if !(self.decay >= 0.0 && self.blend >= 0.0) || (self.decay + self.blend - 1.0).abs() > 1e-12 {
            return bad("decay and blend must be nonnegative and sum to 1");
        }
        if self.threshold_sample_size == 0 {
            return bad("threshold_sample_size must be >= 1");
        }
        Ok(())
    }

    /// Validation that needs the corpus: every weighted view must exist.
    pub fn validate_for(&self, corpus: &Corpus) -> Result<()> {
        self.validate()?;
        for name in self.weights.keys() {
            corpus.view(name)?;
        }
        Ok(())
    }
}

/// Weight-normalized mean of per-view cosine similarities between records `a` and `b`.
pub fn weighted_similarity(corpus: &Corpus, a: usize, b: usize, weights: &BTreeMap<String, f64>) -> Result<f64> {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for (name, &w) in weights {
        let view = corpus.view(name)?;
        if w == 0.0 {
            continue;
        }
        total += w * vector::cosine(&view.row_f64(a), &view.row_f64(b));
        wsum += w;
    }
    if wsum == 0.0 {
        return Err(Error::InvalidConfig("all simulator weights are zero".into()));
    }
    Ok(total / wsum)
}

/// Simulated user state for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub target: usize,
    pub thr: f64,
    /// Similarity values of images judged similar since the last update, keyed by record.
    pub stemp: BTreeMap<usize, f64>,
    pub iter: usize,
}

impl SimState {
    pub fn new(target: usize, thr: f64) -> Self {
        Self {
            target,
            thr,
            stemp: BTreeMap::new(),
            iter: 0,
        }
    }
}

/// Mean weighted similarity of the target to `min(n - 1, sample_size)` other records.
pub fn init_threshold<R: Rng + ?Sized>(corpus: &Corpus, target: usize, cfg: &SimulatorConfig, rng: &mut R) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let others = corpus.len() - 1;
    if others == 0 {
        return Ok(0.0);
    }
    let take = cfg.threshold_sample_size.min(others);
    let mut sum = 0.0;
    for p in index::sample(rng, others, take) {
        let i = if p >= target { p + 1 } else { p };
        sum += weighted_similarity(corpus, target, i, &cfg.weights)?;
    }
    Ok(sum / take as f64)
}

/// Split `shown` into (similar, dissimilar) by strict comparison against the
/// threshold; the similar ones are added to `STemp`.
pub fn judge(shown: &[usize], state: &mut SimState, corpus: &Corpus, cfg: &SimulatorConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut s = Vec::new();
    let mut d = Vec::new();
    for &i in shown {
        let v = weighted_similarity(corpus, state.target, i, &cfg.weights)?;
        if v > state.thr {
            state.stemp.insert(i, v);
            s.push(i);
        } else {
            d.push(i);
        }
    }
    Ok((s, d))
}

/// `thr <- decay * thr + blend * mean(STemp)`, then clear `STemp`. An empty
/// `STemp` leaves the threshold alone.
pub fn update_threshold(state: &mut SimState, cfg: &SimulatorConfig) -> f64 {
    if !state.stemp.is_empty() {
        let u = state.stemp.values().sum::<f64>() / state.stemp.len() as f64;
        state.thr = cfg.decay * state.thr + cfg.blend * u;
        state.stemp.clear();
    }
    state.thr
}

pub(crate) fn ids(corpus: &Corpus, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| corpus.id(i).to_string()).collect()
}

pub(crate) fn unique(idx: &[usize]) -> bool {
    idx.iter().collect::<BTreeSet<_>>().len() == idx.len()
}
