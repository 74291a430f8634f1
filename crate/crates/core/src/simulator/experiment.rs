use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_simulation_with, SimulatorConfig};
use crate::corpus::Corpus;
use crate::engine::{Algorithm, BaseEmbeddings, EngineConfig};
use crate::metrics::retrieval_metrics;
use crate::{Error, Result};

/// A set of weighted views that drives both the simulated user's judgment and
/// the rankers' base embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCombo {
    pub name: String,
    pub weights: BTreeMap<String, f64>,
}

impl ViewCombo {
    /// Equal weights over the given views; the name joins them with `+`.
    pub fn equal<S: AsRef<str>>(views: &[S]) -> Self {
        Self {
            name: views.iter().map(|v| v.as_ref()).collect::<Vec<_>>().join("+"),
            weights: views.iter().map(|v| (v.as_ref().to_string(), 1.0)).collect(),
        }
    }
}

impl std::str::FromStr for ViewCombo {
    type Err = Error;

    /// `facenet+mix` or `facenet:2+mix:1`.
    fn from_str(s: &str) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for part in s.split('+').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, w) = match part.split_once(':') {
                Some((n, w)) => (
                    n,
                    w.parse::<f64>()
                        .map_err(|_| Error::InvalidConfig(format!("bad weight in view combo {s:?}")))?,
                ),
                None => (part, 1.0),
            };
            weights.insert(name.to_string(), w);
        }
        if weights.is_empty() {
            return Err(Error::InvalidConfig(format!("empty view combo {s:?}")));
        }
        Ok(Self {
            name: s.trim().to_string(),
            weights,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub combos: Vec<ViewCombo>,
    pub runs_per_cell: usize,
    /// Run `r` of every cell uses seed `seed + r`, so cells share targets.
    pub seed: u64,
    pub simulator: SimulatorConfig,
    pub engine: EngineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Rocchio, Algorithm::Contrastive, Algorithm::Random],
            combos: vec![ViewCombo::equal(&["facenet", "mix", "hog"])],
            runs_per_cell: 10,
            seed: 0,
            simulator: SimulatorConfig::default(),
            engine: EngineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub combo: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub target: String,
    pub converged: bool,
    pub iterations: usize,
    pub ar: f64,
    pub pr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub combo: String,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub converged_runs: usize,
    pub aci: f64,
    pub ar: f64,
    /// Mean over runs where the target was ever scored.
    pub pr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunSummary>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub wall_ms: u64,
}

impl ExperimentReport {
    pub fn cell(&self, combo: &str, algorithm: Algorithm) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.combo == combo && c.algorithm == algorithm)
    }

    /// One row per cell per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("combo,algorithm,metric,value,runs,converged_runs\n");
        for c in &self.cells {
            let pr = c.pr.map(|v| v.to_string()).unwrap_or_default();
            for (m, v) in [("aci", c.aci.to_string()), ("ar", c.ar.to_string()), ("pr", pr)] {
                let _ = writeln!(out, "{},{},{},{},{},{}", c.combo, c.algorithm.name(), m, v, c.runs, c.converged_runs);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Views as check columns, then ACI, AR and PR blocks with one column per algorithm.
    pub fn to_markdown(&self) -> String {
        let views: Vec<&String> = self
            .config
            .combos
            .iter()
            .flat_map(|c| c.weights.keys())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let algs = &self.config.algorithms;
        let mut out = String::from("|");
        for v in &views {
            let _ = write!(out, " {v} |");
        }
        for m in ["ACI", "AR", "PR"] {
            for a in algs {
                let _ = write!(out, " {m} {} |", a.name());
            }
        }
        out.push_str("\n|");
        for _ in 0..views.len() + 3 * algs.len() {
            out.push_str(" --- |");
        }
        out.push('\n');
        for combo in &self.config.combos {
            out.push('|');
            for v in &views {
                let on = combo.weights.get(*v).is_some_and(|w| *w > 0.0);
                out.push_str(if on { " ✓ |" } else { "   |" });
            }
            let cells: Vec<Option<&CellSummary>> = algs.iter().map(|a| self.cell(&combo.name, *a)).collect();
            for c in &cells {
                let _ = write!(out, " {} |", c.map(|c| format!("{:.2}", c.aci)).unwrap_or_default());
            }
            for c in &cells {
                let _ = write!(out, " {} |", c.map(|c| format!("{:.2}", c.ar)).unwrap_or_default());
            }
            for c in &cells {
                let pr = c.and_then(|c| c.pr).map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
                let _ = write!(out, " {pr} |");
            }
            out.push('\n');
        }
        out
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Every algorithm on every view combo, `runs_per_cell` seeded simulations each.
pub fn run_experiment(corpus: &Arc<Corpus>, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.runs_per_cell == 0 {
        return Err(Error::InvalidConfig("runs_per_cell must be >= 1".into()));
    }
    if cfg.algorithms.is_empty() || cfg.combos.is_empty() {
        return Err(Error::InvalidConfig("need at least one algorithm and one view combo".into()));
    }
    let started = now();
    let mut prepared = Vec::with_capacity(cfg.combos.len());
    for combo in &cfg.combos {
        let sim = SimulatorConfig {
            weights: combo.weights.clone(),
            ..cfg.simulator.clone()
        };
        sim.validate_for(corpus)?;
        let engine = EngineConfig {
            view_weights: Some(combo.weights.clone()),
            ..cfg.engine.clone()
        };
        engine.validate()?;
        let base = Arc::new(BaseEmbeddings::from_corpus(corpus, &engine)?);
        prepared.push((combo, sim, engine, base));
    }

    let jobs: Vec<(usize, Algorithm, u64)> = (0..prepared.len())
        .flat_map(|c| {
            cfg.algorithms
                .iter()
                .flat_map(move |&a| (0..cfg.runs_per_cell as u64).map(move |r| (c, a, cfg.seed + r)))
        })
        .collect();
    let run = |&(c, alg, seed): &(usize, Algorithm, u64)| -> Result<RunSummary> {
        let (combo, sim, engine, base) = &prepared[c];
        let log = run_simulation_with(corpus, base, alg, sim, engine, seed, None)?;
        let m = retrieval_metrics(&log);
        Ok(RunSummary {
            combo: combo.name.clone(),
            algorithm: alg,
            seed,
            target: log.target,
            converged: log.converged,
            iterations: log.iterations,
            ar: m.ar,
            pr: m.pr,
        })
    };
    #[cfg(feature = "parallel")]
    let runs: Vec<RunSummary> = jobs.par_iter().map(run).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<RunSummary> = jobs.iter().map(run).collect::<Result<_>>()?;

    let cells = runs
        .chunks(cfg.runs_per_cell)
        .map(|chunk| CellSummary {
            combo: chunk[0].combo.clone(),
            algorithm: chunk[0].algorithm,
            runs: chunk.len(),
            converged_runs: chunk.iter().filter(|r| r.converged).count(),
            aci: mean(chunk.iter().map(|r| r.iterations as f64)).unwrap_or(0.0),
            ar: mean(chunk.iter().map(|r| r.ar)).unwrap_or(0.0),
            pr: mean(chunk.iter().filter_map(|r| r.pr)),
        })
        .collect();

    Ok(ExperimentReport {
        config: cfg.clone(),
        cells,
        runs,
        notes: vec![
            "PR per iteration is 1 - rank/(candidates - 1), averaged over the iterations where the target was scored".into(),
            "runs that never show the target count max_iterations toward ACI".into(),
        ],
        wall_ms: elapsed_ms(started),
    })
}

#[cfg(not(target_arch = "wasm32"))]
fn now() -> std::time::Instant {
    std::time::Instant::now()
}

#[cfg(not(target_arch = "wasm32"))]
fn elapsed_ms(t: std::time::Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

#[cfg(target_arch = "wasm32")]
fn now() {}

#[cfg(target_arch = "wasm32")]
fn elapsed_ms(_: ()) -> u64 {
    0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, SynthConfig};
    use crate::metrics::{average_relevance, percentile_rank};
    use crate::simulator::run_simulation;

    fn small() -> Arc<Corpus> {
        Arc::new(synthesize_corpus(&SynthConfig::standard(150, 4, 0.1, 8)).unwrap())
    }

    #[test]
    fn single_cell_single_run_matches_the_simulation() {
        let c = small();
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::Rocchio],
            combos: vec![ViewCombo::equal(&["mix"])],
            runs_per_cell: 1,
            seed: 3,
            ..Default::default()
        };
        let rep = run_experiment(&c, &cfg).unwrap();
        assert_eq!(rep.cells.len(), 1);
        let sim = SimulatorConfig {
            weights: cfg.combos[0].weights.clone(),
            ..Default::default()
        };
        let eng = EngineConfig {
            view_weights: Some(cfg.combos[0].weights.clone()),
            ..Default::default()
        };
        let log = run_simulation(&c, Algorithm::Rocchio, &sim, &eng, 3).unwrap();
        let cell = &rep.cells[0];
        assert_eq!(cell.aci, log.iterations as f64);
        assert_eq!(cell.ar, average_relevance(&log).unwrap_or(0.0));
        assert_eq!(cell.pr, percentile_rank(&log).ok());
        assert_eq!(rep.to_csv().lines().count(), 4);
    }

    #[test]
    fn layout_and_determinism() {
        let c = small();
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::Rocchio, Algorithm::Random],
            combos: vec!["facenet+mix+hog".parse().unwrap(), "mix".parse().unwrap()],
            runs_per_cell: 2,
            engine: EngineConfig { epochs: 2, ..Default::default() },
            ..Default::default()
        };
        let a = run_experiment(&c, &cfg).unwrap();
        let b = run_experiment(&c, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.cells.len(), 4);
        let md = a.to_markdown();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 2 + 2);
        assert_eq!(
            lines[0],
            "| facenet | hog | mix | ACI rocchio | ACI random | AR rocchio | AR random | PR rocchio | PR random |"
        );
        assert!(lines[3].starts_with("|   |   | ✓ |"));
    }

    #[test]
    fn combo_parsing() {
        let c: ViewCombo = "facenet:2+mix".parse().unwrap();
        assert_eq!(c.weights["facenet"], 2.0);
        assert_eq!(c.weights["mix"], 1.0);
        assert!("".parse::<ViewCombo>().is_err());
        assert!("a:x".parse::<ViewCombo>().is_err());
    }
}
