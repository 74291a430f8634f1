//! The relevance-feedback loop.
//!
//! Each feedback round: relabel, periodically train on anchored batches, fold
//! the round into the history, score the unseen pool, then show the top `k`
//! plus `u` exploration slots. Every random draw comes from the session's
//! seeded generator, so a session is a pure function of
//! `(corpus, config, seed, feedback sequence)`.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baselines::{self, RocchioState};
use super::events::{now_ms, FeedbackEvent};
use super::{Algorithm, BaseEmbeddings, EngineConfig};
use crate::corpus::{sample, stratified_indices, AttributeFilter, Corpus};
use crate::losses::LossKind;
use crate::network::{train_step, Optimizer, OptimizerConfig, ProjectionNet, TrainConfig};
use crate::vector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Converged,
    Exhausted,
    Abandoned,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Active => "active",
            SessionStatus::Converged => "converged",
            SessionStatus::Exhausted => "exhausted",
            SessionStatus::Abandoned => "abandoned",
        }
    }
}

/// Scores over the unseen pool from one ranking step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
    /// Candidate indices, best first.
    pub ranking: Vec<usize>,
}

impl ScoreTable {
    pub fn new(corpus: &Corpus, candidates: Vec<usize>, scores: Vec<f64>) -> Self {
        let ranking = baselines::rank_by_scores(corpus, &candidates, &scores);
        Self {
            candidates,
            scores,
            ranking,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Zero-based position of record `idx` in the ranking.
    pub fn rank_of(&self, idx: usize) -> Option<usize> {
        self.ranking.iter().position(|&i| i == idx)
    }

    pub fn score_of(&self, idx: usize) -> Option<f64> {
        self.candidates.iter().position(|&i| i == idx).map(|p| self.scores[p])
    }
}

#[derive(Debug, Clone)]
enum Model {
    Projection { net: ProjectionNet, opt: Optimizer },
    Rocchio(RocchioState),
    Base,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackOutcome {
    Batch {
        iteration: usize,
        batch: Vec<String>,
        trained: bool,
        loss: Option<f64>,
    },
    Closed(SessionStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Unseen,
    Pending,
    Similar,
    Dissimilar,
}

#[derive(Debug, Clone)]
pub struct Session {
    corpus: Arc<Corpus>,
    base: Arc<BaseEmbeddings>,
    cfg: EngineConfig,
    algorithm: Algorithm,
    constraints: AttributeFilter,
    labels: Vec<Label>,
    similar: Vec<usize>,
    dissimilar: Vec<usize>,
    remaining: usize,
    batch: Vec<usize>,
    iter: usize,
    status: SessionStatus,
    converged_at: Option<usize>,
    rng: ChaCha8Rng,
    model: Model,
    events: Vec<FeedbackEvent>,
    last_scores: Option<ScoreTable>,
}

impl Session {
    pub fn start(corpus: Arc<Corpus>, constraints: AttributeFilter, cfg: EngineConfig, algorithm: Algorithm) -> Result<Self> {
        Self::start_inner(corpus, None, constraints, cfg, algorithm, None)
    }

    /// Start a contrastive session from a given (for example pretrained) network.
    pub fn start_with_net(
        corpus: Arc<Corpus>,
        constraints: AttributeFilter,
        cfg: EngineConfig,
        net: ProjectionNet,
    ) -> Result<Self> {
        Self::start_inner(corpus, None, constraints, cfg, Algorithm::Contrastive, Some(net))
    }

    /// Like [`Session::start`], reusing base embeddings already built for this
    /// corpus and config.
    pub fn start_shared(
        corpus: Arc<Corpus>,
        base: Arc<BaseEmbeddings>,
        constraints: AttributeFilter,
        cfg: EngineConfig,
        algorithm: Algorithm,
        net: Option<ProjectionNet>,
    ) -> Result<Self> {
        Self::start_inner(corpus, Some(base), constraints, cfg, algorithm, net)
    }

    fn start_inner(
        corpus: Arc<Corpus>,
        base: Option<Arc<BaseEmbeddings>>,
        constraints: AttributeFilter,
        cfg: EngineConfig,
        algorithm: Algorithm,
        net: Option<ProjectionNet>,
    ) -> Result<Self> {
        cfg.validate()?;
        sample::validate_filter(&corpus, &constraints)?;
        let base = match base {
            Some(b) => b,
            None => Arc::new(BaseEmbeddings::from_corpus(&corpus, &cfg)?),
        };
        if base.len() != corpus.len() {
            return Err(Error::DimMismatch {
                expected: corpus.len(),
                got: base.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let pool: Vec<usize> = (0..corpus.len())
            .filter(|&i| sample::matches(&corpus, i, &constraints))
            .collect();
        if pool.is_empty() {
            return Err(Error::NoMatches);
        }
        let batch = stratified_indices(&corpus, &pool, cfg.batch_size(), &mut rng);

        let model = match algorithm {
            Algorithm::Contrastive => {
                let net = match net {
                    Some(n) => {
                        if n.input_dim() != base.dim() {
                            return Err(Error::DimMismatch {
                                expected: base.dim(),
                                got: n.input_dim(),
                            });
                        }
                        n
                    }
                    None => ProjectionNet::new(base.dim(), &cfg.hidden, cfg.output_dim, cfg.seed)?,
                };
                let opt = Optimizer::new(
                    OptimizerConfig {
                        kind: cfg.optimizer,
                        learning_rate: cfg.learning_rate,
                        ..Default::default()
                    },
                    &net,
                );
                Model::Projection { net, opt }
            }
            Algorithm::Rocchio => Model::Rocchio(RocchioState::new(base.dim(), cfg.rocchio)),
            Algorithm::Centroid => Model::Base,
            Algorithm::Random => Model::Random,
        };

        let mut labels = vec![Label::Unseen; corpus.len()];
        for &i in &batch {
            labels[i] = Label::Pending;
        }
        Ok(Self {
            remaining: corpus.len() - batch.len(),
            corpus,
            base,
            cfg,
            algorithm,
            constraints,
            labels,
            similar: Vec::new(),
            dissimilar: Vec::new(),
            batch,
            iter: 0,
            status: SessionStatus::Active,
            converged_at: None,
            rng,
            model,
            events: Vec::new(),
            last_scores: None,
        })
    }

    /// Rebuild a session by re-applying a recorded feedback sequence.
    pub fn replay(
        corpus: Arc<Corpus>,
        constraints: AttributeFilter,
        cfg: EngineConfig,
        algorithm: Algorithm,
        events: &[FeedbackEvent],
    ) -> Result<Self> {
        let mut s = Self::start(corpus, constraints, cfg, algorithm)?;
        for e in events {
            if e.iter != s.iter || e.shown != s.batch_ids() {
                return Err(Error::Degenerate(format!(
                    "event log diverges from replay at iteration {}",
                    e.iter
                )));
            }
            s.submit_feedback(&e.similar)?;
        }
        Ok(s)
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn constraints(&self) -> &AttributeFilter {
        &self.constraints
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    pub fn batch(&self) -> &[usize] {
        &self.batch
    }

    pub fn batch_ids(&self) -> Vec<String> {
        self.batch.iter().map(|&i| self.corpus.id(i).to_string()).collect()
    }

    /// All-time similar set, in first-labelled order.
    pub fn similar(&self) -> &[usize] {
        &self.similar
    }

    pub fn dissimilar(&self) -> &[usize] {
        &self.dissimilar
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn remaining_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Label::Unseen)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn events(&self) -> &[FeedbackEvent] {
        &self.events
    }

    /// Scores from the most recent ranking step, if that step had any.
    pub fn last_scores(&self) -> Option<&ScoreTable> {
        self.last_scores.as_ref()
    }

    pub fn base(&self) -> &Arc<BaseEmbeddings> {
        &self.base
    }

    pub fn network(&self) -> Option<&ProjectionNet> {
        match &self.model {
            Model::Projection { net, .. } => Some(net),
            _ => None,
        }
    }

    /// Project record `i` into the space the session ranks in.
    pub fn project(&self, i: usize) -> Vec<f64> {
        match &self.model {
            Model::Projection { net, .. } => net.forward(self.base.row(i)).expect("dims checked at start"),
            _ => self.base.row(i).to_vec(),
        }
    }

    fn ensure_active(&self) -> Result<()> {
        match self.status {
            SessionStatus::Active => Ok(()),
            s => Err(Error::SessionClosed(s.as_str())),
        }
    }

    fn resolve_batch_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(ids.len());
        let mut offenders = Vec::new();
        for id in ids {
            let id = id.as_ref();
            match self.corpus.index_of(id) {
                Ok(i) if self.batch.contains(&i) => {
                    if !out.contains(&i) {
                        out.push(i);
                    }
                }
                _ => offenders.push(id.to_string()),
            }
        }
        if offenders.is_empty() {
            Ok(out)
        } else {
            Err(Error::NotInBatch(offenders))
        }
    }

    /// The user found the image they were looking for in the current batch.
    pub fn report_target(&mut self, id: &str) -> Result<usize> {
        self.ensure_active()?;
        self.resolve_batch_ids(&[id])?;
        self.status = SessionStatus::Converged;
        self.converged_at = Some(self.iter);
        Ok(self.iter)
    }

    /// Stop the session without a target; used when an external clip is hit.
    pub fn abandon(&mut self) {
        if self.status == SessionStatus::Active {
            self.status = SessionStatus::Abandoned;
        }
    }

    /// Apply one round of feedback: `similar_ids` must come from the current batch,
    /// everything else in the batch counts as dissimilar.
    pub fn submit_feedback<S: AsRef<str>>(&mut self, similar_ids: &[S]) -> Result<FeedbackOutcome> {
        self.ensure_active()?;
        let s_round = self.resolve_batch_ids(similar_ids)?;
        let s_set: HashSet<usize> = s_round.iter().copied().collect();
        let d_round: Vec<usize> = self.batch.iter().copied().filter(|i| !s_set.contains(i)).collect();
        let shown = self.batch_ids();

        // Latest label wins for re-shown images.
        self.similar.retain(|i| !d_round.contains(i));
        self.dissimilar.retain(|i| !s_set.contains(i));

        let mut trained = false;
        let mut loss = None;
        if self.iter.is_multiple_of(self.cfg.train_every) {
            if let Some(l) = self.train_anchored(&s_round, &d_round)? {
                trained = true;
                loss = Some(l);
            }
        }

        for &i in &s_round {
            if self.labels[i] != Label::Similar {
                self.labels[i] = Label::Similar;
                self.similar.push(i);
            }
        }
        for &i in &d_round {
            if self.labels[i] != Label::Dissimilar {
                self.labels[i] = Label::Dissimilar;
                self.dissimilar.push(i);
            }
        }

        if let Model::Rocchio(state) = &mut self.model {
            state.update(&self.base, &s_round, &d_round);
        }

        let candidates = self.remaining_indices();
        self.last_scores = self.score(&candidates)?;
        let next = self.next_batch(&candidates);
        for &i in &next {
            if self.labels[i] == Label::Unseen {
                self.labels[i] = Label::Pending;
                self.remaining -= 1;
            }
        }

        self.events.push(FeedbackEvent {
            iter: self.iter,
            shown,
            similar: s_round.iter().map(|&i| self.corpus.id(i).to_string()).collect(),
            timestamp_ms: now_ms(),
            trained,
            loss,
        });
        self.batch = next;
        self.iter += 1;

        if self.batch.is_empty() {
            self.status = SessionStatus::Exhausted;
        } else if self.iter >= self.cfg.max_iterations {
            self.status = SessionStatus::Abandoned;
        }
        Ok(match self.status {
            SessionStatus::Active => FeedbackOutcome::Batch {
                iteration: self.iter,
                batch: self.batch_ids(),
                trained,
                loss,
            },
            s => FeedbackOutcome::Closed(s),
        })
    }

    /// `sample(history, min(prev_samp, |history|))` joined with this round's labels.
    fn anchored(&mut self, history_similar: bool, round: &[usize]) -> Vec<usize> {
        let history = if history_similar { &self.similar } else { &self.dissimilar };
        let take = self.cfg.prev_samp.min(history.len());
        let picks = index::sample(&mut self.rng, history.len(), take);
        let mut out: Vec<usize> = picks.iter().map(|p| history[p]).collect();
        for &i in round {
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }

    fn train_anchored(&mut self, s_round: &[usize], d_round: &[usize]) -> Result<Option<f64>> {
        if !matches!(self.model, Model::Projection { .. }) {
            return Ok(None);
        }
        let s_batch = self.anchored(true, s_round);
        let d_batch = self.anchored(false, d_round);
        let kind = self.cfg.loss_kind;
        if s_batch.len() < 2 || d_batch.len() < kind.min_dissimilar() {
            return Ok(None);
        }
        let s_rows: Vec<&[f64]> = s_batch.iter().map(|&i| self.base.row(i)).collect();
        let d_rows: Vec<&[f64]> = d_batch.iter().map(|&i| self.base.row(i)).collect();
        let tc = TrainConfig {
            epochs: self.cfg.epochs,
            learning_rate: self.cfg.learning_rate,
            tau: self.cfg.tau,
            seed: self.cfg.seed,
        };
        let Model::Projection { net, opt } = &mut self.model else {
            unreachable!()
        };
        let mut last = 0.0;
        for _ in 0..tc.epochs {
            last = train_step(net, &s_rows, &d_rows, &tc, kind, opt)?;
        }
        Ok(Some(last))
    }

    fn score(&self, candidates: &[usize]) -> Result<Option<ScoreTable>> {
        let corpus = &self.corpus;
        match &self.model {
            Model::Projection { net, .. } => {
                if self.similar.is_empty() {
                    return Ok(None);
                }
                let proj = |set: &[usize]| -> Result<Vec<Vec<f64>>> {
                    set.iter().map(|&i| net.forward(self.base.row(i))).collect()
                };
                let cs = vector::mean(&proj(&self.similar)?)?;
                let cd = match self.cfg.loss_kind {
                    LossKind::SclossAlt if !self.dissimilar.is_empty() => Some(vector::mean(&proj(&self.dissimilar)?)?),
                    _ => None,
                };
                let mut rows = Vec::with_capacity(candidates.len() * self.base.dim());
                for &i in candidates {
                    rows.extend_from_slice(self.base.row(i));
                }
                let projected = if candidates.is_empty() { Vec::new() } else { net.forward_rows(&rows)? };
                let scores = projected
                    .iter()
                    .map(|u| {
                        let s = vector::cosine(u, &cs);
                        match &cd {
                            Some(cd) => s - vector::cosine(u, cd),
                            None => s,
                        }
                    })
                    .collect();
                Ok(Some(ScoreTable::new(corpus, candidates.to_vec(), scores)))
            }
            Model::Base => Ok(baselines::centroid_ranking(corpus, &self.base, &self.similar, candidates)),
            Model::Rocchio(state) => Ok(state.scores(corpus, &self.base, candidates)),
            Model::Random => Ok(None),
        }
    }

    fn next_batch(&mut self, candidates: &[usize]) -> Vec<usize> {
        let size = self.cfg.batch_size();
        if self.algorithm == Algorithm::Random {
            return baselines::random_recommend(candidates, size, &mut self.rng);
        }
        let Some(table) = &self.last_scores else {
            // Nothing to rank against yet: a fresh balanced draw, preferring
            // records that satisfy the session's constraints.
            let filtered: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&i| sample::matches(&self.corpus, i, &self.constraints))
                .collect();
            let pool = if filtered.is_empty() { candidates } else { &filtered };
            return stratified_indices(&self.corpus, pool, size, &mut self.rng);
        };
        if self.algorithm != Algorithm::Contrastive {
            return table.ranking.iter().take(size).copied().collect();
        }
        let top: Vec<usize> = table.ranking.iter().take(self.cfg.k).copied().collect();
        let pool: Vec<usize> = if self.iter.is_multiple_of(self.cfg.explore_history_every) {
            self.similar.iter().chain(&self.dissimilar).copied().collect()
        } else {
            table.ranking.iter().skip(self.cfg.k).copied().collect::<Vec<_>>()
        };
        let picks = index::sample(&mut self.rng, pool.len(), self.cfg.u.min(pool.len()));
        let mut next = top;
        for p in picks.iter() {
            if !next.contains(&pool[p]) {
                next.push(pool[p]);
            }
        }
        next
    }
}
