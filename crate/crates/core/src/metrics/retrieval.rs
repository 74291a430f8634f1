use serde::{Deserialize, Serialize};

use crate::simulator::SimulationLog;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    /// Percentile rank; `None` when the target was never scored.
    pub pr: Option<f64>,
    pub ar: f64,
    pub aci: f64,
    /// Convergence score of the first log, as if its user had reported the target.
    pub c: f64,
}

/// `1 - rank / (candidates - 1)` with rank 0 the best; 1 for a lone candidate.
pub fn percentile_at(rank: usize, candidates: usize) -> f64 {
    if candidates <= 1 {
        1.0
    } else {
        1.0 - rank as f64 / (candidates - 1) as f64
    }
}

/// Mean per-iteration percentile of the target over the iterations where it was scored.
pub fn percentile_rank(log: &SimulationLog) -> Result<f64> {
    let vals: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| Some(percentile_at(r.target_rank?, r.candidates?)))
        .collect();
    if vals.is_empty() {
        return Err(Error::Empty("scored iterations"));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Mean over judged rounds of the fraction of shown images marked similar.
pub fn average_relevance(log: &SimulationLog) -> Result<f64> {
    relevance_of(log.records.iter().filter_map(|r| Some((r.similar.as_ref()?.len(), r.shown.len()))))
}

pub(crate) fn relevance_of(rounds: impl Iterator<Item = (usize, usize)>) -> Result<f64> {
    let fr: Vec<f64> = rounds
        .filter(|&(_, n)| n > 0)
        .map(|(s, n)| s as f64 / n as f64)
        .collect();
    if fr.is_empty() {
        return Err(Error::Empty("judged iterations"));
    }
    Ok(fr.iter().sum::<f64>() / fr.len() as f64)
}

/// Mean rounds to convergence; clipped runs already carry `max_iterations`.
pub fn average_convergent_iterations(logs: &[SimulationLog]) -> Result<f64> {
    mean_iterations(logs.iter().map(|l| l.iterations))
}

pub(crate) fn mean_iterations(n: impl ExactSizeIterator<Item = usize>) -> Result<f64> {
    let len = n.len();
    if len == 0 {
        return Err(Error::Empty("simulation logs"));
    }
    Ok(n.map(|x| x as f64).sum::<f64>() / len as f64)
}

/// `1 - n / (max_iter + 5)` when the user reported the target, else 0.
pub fn convergence_score(n: usize, max_iter: usize, reported: bool) -> f64 {
    if !reported {
        return 0.0;
    }
    (1.0 - n as f64 / (max_iter as f64 + 5.0)).clamp(0.0, 1.0)
}

/// PR, AR, and ACI of a single run.
pub fn retrieval_metrics(log: &SimulationLog) -> RetrievalMetrics {
    RetrievalMetrics {
        pr: percentile_rank(log).ok(),
        ar: average_relevance(log).unwrap_or(0.0),
        aci: log.iterations as f64,
        c: convergence_score(log.iterations.min(log.max_iterations), log.max_iterations, log.converged),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Algorithm;
    use crate::simulator::SimRecord;
    use proptest::prelude::*;

    fn rec(shown: usize, similar: Option<usize>, rank: Option<(usize, usize)>) -> SimRecord {
        SimRecord {
            iter: 0,
            shown: (0..shown).map(|i| i.to_string()).collect(),
            similar: similar.map(|s| (0..s).map(|i| i.to_string()).collect()),
            thr: 0.0,
            target_rank: rank.map(|r| r.0),
            candidates: rank.map(|r| r.1),
            target_score: rank.map(|_| 0.0),
        }
    }

    fn log(records: Vec<SimRecord>, iterations: usize) -> SimulationLog {
        SimulationLog {
            algorithm: Algorithm::Contrastive,
            seed: 0,
            target: "t".into(),
            initial_thr: 0.0,
            records,
            converged: true,
            iterations,
            max_iterations: 1000,
            trained_rounds: 0,
            wall_ms: 0,
        }
    }

    #[test]
    fn pr_fixtures() {
        let l = log(vec![rec(16, Some(0), Some((0, 10))), rec(16, None, Some((0, 3)))], 1);
        assert_eq!(percentile_rank(&l).unwrap(), 1.0);
        let l = log(vec![rec(16, Some(0), Some((9, 10)))], 1);
        assert_eq!(percentile_rank(&l).unwrap(), 0.0);
        let l = log(vec![rec(16, Some(0), Some((1, 5)))], 1);
        assert_eq!(percentile_rank(&l).unwrap(), 0.75);
        assert_eq!(percentile_at(0, 1), 1.0);
        assert!(percentile_rank(&log(vec![rec(16, Some(0), None)], 1)).is_err());
    }

    #[test]
    fn ar_fixtures() {
        assert_eq!(average_relevance(&log(vec![rec(16, Some(16), None); 3], 3)).unwrap(), 1.0);
        assert_eq!(average_relevance(&log(vec![rec(16, Some(0), None); 3], 3)).unwrap(), 0.0);
        let l = log(vec![rec(16, Some(8), None), rec(16, Some(4), None), rec(16, None, None)], 2);
        assert_eq!(average_relevance(&l).unwrap(), 0.375);
        assert!(average_relevance(&log(vec![rec(16, None, None)], 0)).is_err());
    }

    #[test]
    fn aci_fixtures() {
        assert_eq!(average_convergent_iterations(&[log(vec![], 57)]).unwrap(), 57.0);
        assert_eq!(average_convergent_iterations(&[log(vec![], 10), log(vec![], 20)]).unwrap(), 15.0);
        assert!(average_convergent_iterations(&[]).is_err());
    }

    #[test]
    fn convergence_fixtures() {
        assert_eq!(convergence_score(0, 30, true), 1.0);
        assert_eq!(convergence_score(30, 30, true), 1.0 - 30.0 / 35.0);
        assert!((convergence_score(30, 30, true) - 0.142857).abs() < 1e-6);
        assert_eq!(convergence_score(3, 30, false), 0.0);
    }

    proptest! {
        #[test]
        fn convergence_strictly_decreasing(max in 1usize..500, n in 0usize..499) {
            prop_assume!(n < max);
            prop_assert!(convergence_score(n + 1, max, true) < convergence_score(n, max, true));
            let c = convergence_score(n, max, true);
            prop_assert!((0.0..=1.0).contains(&c));
        }

        #[test]
        fn pr_in_unit_interval(c in 1usize..1000, r in 0usize..1000) {
            prop_assume!(r < c);
            let p = percentile_at(r, c);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
