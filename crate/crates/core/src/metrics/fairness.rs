//! Group demographic parity of a K-NN classifier over a representation.

use std::collections::BTreeSet;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dci::split_indices;
use crate::{Error, Result};

/// A categorical attribute as one class code per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub codes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairnessConfig {
    pub k: usize,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub max_attempts: usize,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        Self {
            k: 5,
            test_fraction: 0.25,
            split_seed: 0,
            max_attempts: 5,
        }
    }
}

/// `cells[i][j] = p(predicted target = t_i | sensitive = s_j)` on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub target: String,
    pub sensitive: String,
    pub target_classes: Vec<usize>,
    pub sensitive_classes: Vec<usize>,
    pub cells: Vec<Vec<f64>>,
    pub dp_gap: f64,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target_class");
        for s in &self.sensitive_classes {
            out.push_str(&format!(",{}={}", self.sensitive, s));
        }
        out.push('\n');
        for (t, row) in self.target_classes.iter().zip(&self.cells) {
            out.push_str(&format!("{}={}", self.target, t));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub heatmaps: Vec<Heatmap>,
    /// Mean of all cells over all attribute pairs.
    pub f_score: f64,
    /// Mean of `|p(t_i|s_j) - p(t_i|s_k)|` over target classes and unordered sensitive pairs.
    pub dp_gap: f64,
    pub split_seed_used: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote among the `k` nearest training points (Euclidean). Ties go to the
/// class whose nearest member is closest.
pub fn knn_predict(train_x: &[&[f64]], train_y: &[usize], query: &[f64], k: usize) -> usize {
    let mut d: Vec<(f64, usize)> = train_x.iter().zip(train_y).map(|(x, &y)| (sq_dist(x, query), y)).collect();
    let k = k.min(d.len()).max(1);
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
    let mut near = d[..k].to_vec();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(usize, usize, usize)> = None; // (votes, -first position, class)
    for (pos, &(_, c)) in near.iter().enumerate() {
        let votes = near.iter().filter(|(_, y)| *y == c).count();
        let first = near.iter().position(|(_, y)| *y == c).unwrap_or(pos);
        if best.is_none_or(|(v, f, _)| votes > v || (votes == v && first < f)) {
            best = Some((votes, first, c));
        }
    }
    best.map(|b| b.2).expect("k >= 1")
}

fn classes(codes: &[usize]) -> Vec<usize> {
    codes.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

fn covers(codes: &[usize], idx: &[usize], all: &[usize]) -> bool {
    let seen: BTreeSet<usize> = idx.iter().map(|&i| codes[i]).collect();
    all.iter().all(|c| seen.contains(c))
}

/// Demographic parity heatmaps for every ordered pair of distinct attributes.
pub fn fairness(z: &[Vec<f64>], attributes: &[Attribute], cfg: &FairnessConfig) -> Result<FairnessReport> {
    if attributes.len() < 2 {
        return Err(Error::InvalidConfig("fairness needs at least two attributes".into()));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let n = z.len();
    for a in attributes {
        if a.codes.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: a.codes.len(),
            });
        }
        if classes(&a.codes).len() < 2 {
            return Err(Error::Degenerate(format!("attribute {:?} has fewer than two classes", a.name)));
        }
    }
    let all_classes: Vec<Vec<usize>> = attributes.iter().map(|a| classes(&a.codes)).collect();

    let mut split = None;
    for attempt in 0..cfg.max_attempts.max(1) as u64 {
        let seed = cfg.split_seed.wrapping_add(attempt);
        let (train, test) = split_indices(n, cfg.test_fraction, seed);
        let ok = attributes
            .iter()
            .zip(&all_classes)
            .all(|(a, c)| covers(&a.codes, &train, c) && covers(&a.codes, &test, c));
        if ok {
            split = Some((train, test, seed));
            break;
        }
    }
    let (train, test, seed_used) =
        split.ok_or_else(|| Error::Degenerate("a class is missing from the train or test split".into()))?;
    let train_x: Vec<&[f64]> = train.iter().map(|&i| z[i].as_slice()).collect();

    // Predictions depend only on the target attribute.
    let predict_for = |t: &Attribute| -> Vec<usize> {
        let ty: Vec<usize> = train.iter().map(|&i| t.codes[i]).collect();
        let one = |&i: &usize| knn_predict(&train_x, &ty, &z[i], cfg.k);
        #[cfg(feature = "parallel")]
        return test.par_iter().map(one).collect();
        #[cfg(not(feature = "parallel"))]
        test.iter().map(one).collect()
    };
    let predictions: Vec<Vec<usize>> = attributes.iter().map(predict_for).collect();

    let mut heatmaps = Vec::new();
    let mut gaps = Vec::new();
    for (ti, t) in attributes.iter().enumerate() {
        for (si, s) in attributes.iter().enumerate() {
            if ti == si {
                continue;
            }
            let tc = &all_classes[ti];
            let sc = &all_classes[si];
            let mut cells = vec![vec![0.0; sc.len()]; tc.len()];
            for (col, &sj) in sc.iter().enumerate() {
                let members: Vec<usize> = (0..test.len()).filter(|&k| s.codes[test[k]] == sj).collect();
                for &k in &members {
                    let row = tc.binary_search(&predictions[ti][k]).expect("prediction is a training class");
                    cells[row][col] += 1.0;
                }
                for row in cells.iter_mut() {
                    row[col] /= members.len() as f64;
                }
            }
            let mut pair_gaps = Vec::new();
            for row in &cells {
                for a in 0..row.len() {
                    for b in a + 1..row.len() {
                        pair_gaps.push((row[a] - row[b]).abs());
                    }
                }
            }
            let dp_gap = pair_gaps.iter().sum::<f64>() / pair_gaps.len().max(1) as f64;
            gaps.extend(pair_gaps);
            heatmaps.push(Heatmap {
                target: t.name.clone(),
                sensitive: s.name.clone(),
                target_classes: tc.clone(),
                sensitive_classes: sc.clone(),
                cells,
                dp_gap,
            });
        }
    }
    let cells: Vec<f64> = heatmaps.iter().flat_map(|h| h.cells.iter().flatten().copied()).collect();
    Ok(FairnessReport {
        f_score: cells.iter().sum::<f64>() / cells.len() as f64,
        dp_gap: gaps.iter().sum::<f64>() / gaps.len().max(1) as f64,
        heatmaps,
        split_seed_used: seed_used,
    })
}
