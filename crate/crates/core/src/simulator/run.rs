use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ids, init_threshold, judge, unique, update_threshold, SimState, SimulatorConfig};
use crate::corpus::{AttributeFilter, Corpus};
use crate::engine::{Algorithm, BaseEmbeddings, EngineConfig, Session, SessionStatus};
use crate::network::ProjectionNet;
use crate::{Error, Result};

/// One shown batch and what the simulated user made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub iter: usize,
    pub shown: Vec<String>,
    /// `None` for the final batch, which ends the run when it contains the target.
    pub similar: Option<Vec<String>>,
    pub thr: f64,
    /// Zero-based rank of the target among the scored candidates that produced this batch.
    pub target_rank: Option<usize>,
    pub candidates: Option<usize>,
    pub target_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub target: String,
    pub initial_thr: f64,
    pub records: Vec<SimRecord>,
    pub converged: bool,
    /// Feedback rounds before the target was shown; `max_iterations` when clipped.
    pub iterations: usize,
    pub max_iterations: usize,
    pub trained_rounds: usize,
    /// Not written by [`SimulationLog::write_jsonl`], so logs stay byte-reproducible.
    #[serde(skip)]
    pub wall_ms: u64,
}

/// One line of the JSONL form of a [`SimulationLog`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header {
        algorithm: Algorithm,
        seed: u64,
        target: String,
        initial_thr: f64,
        max_iterations: usize,
    },
    Round(SimRecord),
    Summary {
        converged: bool,
        iterations: usize,
        trained_rounds: usize,
    },
}

impl SimulationLog {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = |l: &LogLine| -> Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n").map_err(|e| Error::io("<log>", e))
        };
        line(&LogLine::Header {
            algorithm: self.algorithm,
            seed: self.seed,
            target: self.target.clone(),
            initial_thr: self.initial_thr,
            max_iterations: self.max_iterations,
        })?;
        for r in &self.records {
            line(&LogLine::Round(r.clone()))?;
        }
        line(&LogLine::Summary {
            converged: self.converged,
            iterations: self.iterations,
            trained_rounds: self.trained_rounds,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        let mut summary = None;
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line)? {
                h @ LogLine::Header { .. } => header = Some(h),
                LogLine::Round(rec) => records.push(rec),
                s @ LogLine::Summary { .. } => summary = Some(s),
            }
        }
        match (header, summary) {
            (
                Some(LogLine::Header {
                    algorithm,
                    seed,
                    target,
                    initial_thr,
                    max_iterations,
                }),
                Some(LogLine::Summary {
                    converged,
                    iterations,
                    trained_rounds,
                }),
            ) => Ok(Self {
                algorithm,
                seed,
                target,
                initial_thr,
                records,
                converged,
                iterations,
                max_iterations,
                trained_rounds,
                wall_ms: 0,
            }),
            _ => Err(Error::Degenerate("simulation log lacks a header or summary line".into())),
        }
    }
}

/// Simulate one user session end to end.
pub fn run_simulation(
    corpus: &Arc<Corpus>,
    algorithm: Algorithm,
    sim_cfg: &SimulatorConfig,
    engine_cfg: &EngineConfig,
    seed: u64,
) -> Result<SimulationLog> {
    let base = Arc::new(BaseEmbeddings::from_corpus(corpus, engine_cfg)?);
    run_simulation_with(corpus, &base, algorithm, sim_cfg, engine_cfg, seed, None)
}

/// [`run_simulation`] with prebuilt base embeddings and an optional starting network.
pub fn run_simulation_with(
    corpus: &Arc<Corpus>,
    base: &Arc<BaseEmbeddings>,
    algorithm: Algorithm,
    sim_cfg: &SimulatorConfig,
    engine_cfg: &EngineConfig,
    seed: u64,
    net: Option<ProjectionNet>,
) -> Result<SimulationLog> {
    simulate_session(corpus, base, algorithm, sim_cfg, engine_cfg, seed, net).map(|(log, _)| log)
}

/// Like [`run_simulation_with`], also handing back the engine session in its final state.
pub fn simulate_session(
    corpus: &Arc<Corpus>,
    base: &Arc<BaseEmbeddings>,
    algorithm: Algorithm,
    sim_cfg: &SimulatorConfig,
    engine_cfg: &EngineConfig,
    seed: u64,
    net: Option<ProjectionNet>,
) -> Result<(SimulationLog, Session)> {
    let started = Clock::start();
    sim_cfg.validate_for(corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = match &sim_cfg.target {
        Some(id) => corpus.index_of(id)?,
        None => {
            if corpus.is_empty() {
                return Err(Error::Empty("corpus"));
            }
            rng.random_range(0..corpus.len())
        }
    };
    let initial_thr = init_threshold(corpus, target, sim_cfg, &mut rng)?;
    let mut state = SimState::new(target, initial_thr);

    let ecfg = EngineConfig {
        seed,
        max_iterations: sim_cfg.max_iterations.saturating_add(1),
        ..engine_cfg.clone()
    };
    let mut session = Session::start_shared(corpus.clone(), base.clone(), AttributeFilter::new(), ecfg, algorithm, net)?;

    let mut records = Vec::new();
    let mut rank_info: Option<(usize, usize, f64)> = None;
    let mut trained_rounds = 0;
    let mut converged = false;
    loop {
        let shown = session.batch().to_vec();
        debug_assert!(unique(&shown));
        let (target_rank, candidates, target_score) = match rank_info {
            Some((r, c, s)) => (Some(r), Some(c), Some(s)),
            None => (None, None, None),
        };
        let mut rec = SimRecord {
            iter: state.iter,
            shown: ids(corpus, &shown),
            similar: None,
            thr: state.thr,
            target_rank,
            candidates,
            target_score,
        };
        if shown.contains(&target) {
            converged = true;
            records.push(rec);
            break;
        }
        if state.iter >= sim_cfg.max_iterations || session.status() != SessionStatus::Active {
            records.push(rec);
            break;
        }
        let (s, _d) = judge(&shown, &mut state, corpus, sim_cfg)?;
        rec.similar = Some(ids(corpus, &s));
        records.push(rec);

        let similar_ids = ids(corpus, &s);
        session.submit_feedback(&similar_ids)?;
        if session.events().last().is_some_and(|e| e.trained) {
            trained_rounds += 1;
        }
        rank_info = session.last_scores().and_then(|t| {
            let r = t.rank_of(target)?;
            Some((r, t.len(), t.score_of(target)?))
        });

        state.iter += 1;
        if state.iter.is_multiple_of(sim_cfg.update_period) {
            update_threshold(&mut state, sim_cfg);
        }
    }

    let log = SimulationLog {
        algorithm,
        seed,
        target: corpus.id(target).to_string(),
        initial_thr,
        iterations: if converged { state.iter } else { sim_cfg.max_iterations },
        records,
        converged,
        max_iterations: sim_cfg.max_iterations,
        trained_rounds,
        wall_ms: started.elapsed_ms(),
    };
    Ok((log, session))
}

struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed_ms(&self) -> u64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_millis() as u64
        }
        #[cfg(target_arch = "wasm32")]
        {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, SynthConfig};

    fn small() -> Arc<Corpus> {
        Arc::new(synthesize_corpus(&SynthConfig::standard(120, 4, 0.1, 3)).unwrap())
    }

    #[test]
    fn planted_target_converges_at_zero() {
        let c = small();
        let ecfg = EngineConfig::default();
        let probe = Session::start(c.clone(), AttributeFilter::new(), EngineConfig { seed: 5, ..ecfg.clone() }, Algorithm::Contrastive).unwrap();
        let planted = probe.batch_ids()[3].clone();
        let scfg = SimulatorConfig {
            target: Some(planted.clone()),
            ..Default::default()
        };
        let log = run_simulation(&c, Algorithm::Contrastive, &scfg, &ecfg, 5).unwrap();
        assert!(log.converged);
        assert_eq!(log.iterations, 0);
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.target, planted);
    }

    #[test]
    fn logs_are_byte_identical_per_seed() {
        let c = small();
        let ecfg = EngineConfig { epochs: 2, ..Default::default() };
        let scfg = SimulatorConfig::default();
        for alg in Algorithm::ALL {
            let a = run_simulation(&c, alg, &scfg, &ecfg, 11).unwrap().to_jsonl();
            let b = run_simulation(&c, alg, &scfg, &ecfg, 11).unwrap().to_jsonl();
            assert_eq!(a, b, "{}", alg.name());
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let c = small();
        let log = run_simulation(&c, Algorithm::Rocchio, &SimulatorConfig::default(), &EngineConfig::default(), 2).unwrap();
        let back = SimulationLog::read_jsonl(log.to_jsonl().as_bytes()).unwrap();
        assert_eq!(back, SimulationLog { wall_ms: 0, ..log });
    }

    #[test]
    fn clipped_run_reports_max_iterations() {
        let c = small();
        let scfg = SimulatorConfig {
            max_iterations: 1,
            ..Default::default()
        };
        let mut saw_clip = false;
        for seed in 0..10 {
            let log = run_simulation(&c, Algorithm::Random, &scfg, &EngineConfig::default(), seed).unwrap();
            if !log.converged {
                saw_clip = true;
                assert_eq!(log.iterations, 1);
                assert_eq!(log.records.len(), 2);
            }
        }
        assert!(saw_clip);
    }

    #[test]
    fn iterations_are_monotone_and_judgments_partition() {
        let c = small();
        let log = run_simulation(&c, Algorithm::Contrastive, &SimulatorConfig::default(), &EngineConfig::default(), 4).unwrap();
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.iter, i);
            if let Some(s) = &r.similar {
                assert!(s.iter().all(|id| r.shown.contains(id)));
            }
        }
    }
}
