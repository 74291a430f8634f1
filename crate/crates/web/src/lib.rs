//! WebAssembly bindings for the browser demo: the separating loss with its
//! gradients, a step-at-a-time simulated session, and DCI scores.
//!
//! Each export is a thin wrapper over a plain function or type that the native
//! tests exercise directly.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relfeed::corpus::{synthesize_corpus, AttributeFilter, Corpus, SynthConfig};
use relfeed::engine::{Algorithm, EngineConfig, FeedbackOutcome, Session, SessionStatus};
use relfeed::losses::{loss_with_grad, LossKind};
use relfeed::metrics::{dci, ImportanceMatrix};
use relfeed::simulator::{init_threshold, judge, update_threshold, SimState, SimulatorConfig, ViewCombo};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct LossReport {
    pub loss: f64,
    pub grad_similar: Vec<Vec<f64>>,
    pub grad_dissimilar: Vec<Vec<f64>>,
}

/// Loss and gradients for JSON arrays of similar and dissimilar vectors.
pub fn loss_report(similar: &str, dissimilar: &str, tau: f64, symmetric: bool) -> Result<LossReport, String> {
    let s: Vec<Vec<f64>> = serde_json::from_str(similar).map_err(|e| format!("similar: {e}"))?;
    let d: Vec<Vec<f64>> = serde_json::from_str(dissimilar).map_err(|e| format!("dissimilar: {e}"))?;
    let kind = if symmetric { LossKind::SclossAlt } else { LossKind::Scloss };
    let g = loss_with_grad(kind, &s, &d, tau).map_err(|e| e.to_string())?;
    Ok(LossReport {
        loss: g.value,
        grad_similar: g.grad_similar,
        grad_dissimilar: g.grad_dissimilar,
    })
}

#[derive(Debug, Serialize)]
pub struct DciSummary {
    pub disentanglement: f64,
    pub completeness: f64,
    pub per_latent: Vec<Option<f64>>,
    pub per_factor: Vec<Option<f64>>,
}

/// D and C of a JSON importance matrix (rows are latents, columns factors).
pub fn dci_summary(importance: &str) -> Result<DciSummary, String> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(importance).map_err(|e| e.to_string())?;
    let s = dci(&ImportanceMatrix::new(rows).map_err(|e| e.to_string())?);
    Ok(DciSummary {
        disentanglement: s.disentanglement,
        completeness: s.completeness,
        per_latent: s.per_latent_disentanglement,
        per_factor: s.per_factor_completeness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tile {
    pub id: String,
    pub attributes: BTreeMap<String, String>,
    pub similarity: f64,
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Round {
    pub iteration: usize,
    pub shown: Vec<Tile>,
    /// Ids the simulated user marked similar; empty on the final round.
    pub similar: Vec<String>,
    pub threshold: f64,
    pub trained: bool,
    pub loss: Option<f64>,
    pub done: bool,
    pub converged: bool,
}

/// A simulated user session advanced one feedback round at a time. Draws
/// the same target, threshold, and batches as a batch simulation with the
/// same seed.
pub struct Stepper {
    corpus: Arc<Corpus>,
    session: Session,
    state: SimState,
    sim: SimulatorConfig,
    done: bool,
    converged: bool,
}

impl Stepper {
    pub fn new(corpus: Arc<Corpus>, algorithm: Algorithm, sim: SimulatorConfig, engine: EngineConfig, seed: u64) -> Result<Self, String> {
        let err = |e: relfeed::Error| e.to_string();
        sim.validate_for(&corpus).map_err(err)?;
        if corpus.is_empty() {
            return Err("empty corpus".into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = match &sim.target {
            Some(id) => corpus.index_of(id).map_err(err)?,
            None => rng.random_range(0..corpus.len()),
        };
        let thr = init_threshold(&corpus, target, &sim, &mut rng).map_err(err)?;
        let engine = EngineConfig {
            seed,
            max_iterations: sim.max_iterations.saturating_add(1),
            ..engine
        };
        let session = Session::start(corpus.clone(), AttributeFilter::new(), engine, algorithm).map_err(err)?;
        Ok(Self {
            corpus,
            session,
            state: SimState::new(target, thr),
            sim,
            done: false,
            converged: false,
        })
    }

    /// A synthetic corpus with `attributes` attributes and the standard three views,
    /// ranked and judged on all three.
    pub fn synthetic(n: usize, attributes: usize, noise: f64, algorithm: Algorithm, seed: u64) -> Result<Self, String> {
        let corpus = Arc::new(synthesize_corpus(&SynthConfig::standard(n, attributes, noise, seed)).map_err(|e| e.to_string())?);
        let combo = ViewCombo::equal(&["facenet", "mix", "hog"]);
        let sim = SimulatorConfig {
            weights: combo.weights.clone(),
            ..Default::default()
        };
        let engine = EngineConfig {
            view_weights: Some(combo.weights),
            ..Default::default()
        };
        Self::new(corpus, algorithm, sim, engine, seed)
    }

    pub fn target(&self) -> Tile {
        self.tile(self.state.target)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn tile(&self, i: usize) -> Tile {
        Tile {
            id: self.corpus.id(i).to_string(),
            attributes: self.corpus.record(i).attributes.clone(),
            similarity: relfeed::simulator::weighted_similarity(&self.corpus, self.state.target, i, &self.sim.weights)
                .unwrap_or(0.0),
            is_target: i == self.state.target,
        }
    }

    /// Show the current batch to the simulated user and apply their feedback.
    pub fn step(&mut self) -> Result<Round, String> {
        if self.done {
            return Err("session is over".into());
        }
        let shown = self.session.batch().to_vec();
        let mut round = Round {
            iteration: self.state.iter,
            shown: shown.iter().map(|&i| self.tile(i)).collect(),
            similar: Vec::new(),
            threshold: self.state.thr,
            trained: false,
            loss: None,
            done: false,
            converged: false,
        };
        if shown.contains(&self.state.target) {
            self.done = true;
            self.converged = true;
        } else if self.state.iter >= self.sim.max_iterations || self.session.status() != SessionStatus::Active {
            self.done = true;
        }
        if self.done {
            round.done = true;
            round.converged = self.converged;
            return Ok(round);
        }
        let (s, _) = judge(&shown, &mut self.state, &self.corpus, &self.sim).map_err(|e| e.to_string())?;
        round.similar = s.iter().map(|&i| self.corpus.id(i).to_string()).collect();
        if let FeedbackOutcome::Batch { trained, loss, .. } = self.session.submit_feedback(&round.similar).map_err(|e| e.to_string())? {
            round.trained = trained;
            round.loss = loss;
        }
        self.state.iter += 1;
        if self.state.iter.is_multiple_of(self.sim.update_period) {
            update_threshold(&mut self.state, &self.sim);
        }
        Ok(round)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// `{loss, grad_similar, grad_dissimilar}` as JSON.
#[wasm_bindgen(js_name = separatingLoss)]
pub fn separating_loss(similar: &str, dissimilar: &str, tau: f64, symmetric: bool) -> Result<String, JsError> {
    loss_report(similar, dissimilar, tau, symmetric)
        .map(|r| to_json(&r))
        .map_err(|e| JsError::new(&e))
}

/// `{disentanglement, completeness, per_latent, per_factor}` as JSON.
#[wasm_bindgen(js_name = dciScores)]
pub fn dci_scores(importance: &str) -> Result<String, JsError> {
    dci_summary(importance).map(|r| to_json(&r)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct SimulationDemo(Stepper);

#[wasm_bindgen]
impl SimulationDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, attributes: usize, noise: f64, algorithm: &str, seed: u64) -> Result<SimulationDemo, JsError> {
        let alg: Algorithm = algorithm.parse().map_err(|e: relfeed::Error| JsError::new(&e.to_string()))?;
        Stepper::synthetic(n, attributes, noise, alg, seed)
            .map(SimulationDemo)
            .map_err(|e| JsError::new(&e))
    }

    /// The hidden target as a JSON tile.
    pub fn target(&self) -> String {
        to_json(&self.0.target())
    }

    /// One round as JSON.
    pub fn step(&mut self) -> Result<String, JsError> {
        self.0.step().map(|r| to_json(&r)).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(getter)]
    pub fn done(&self) -> bool {
        self.0.is_done()
    }
}
