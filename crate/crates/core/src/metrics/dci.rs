//! Disentanglement, completeness and informativeness of a representation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    /// Gradient-boosted depth-1 regression trees; importance is the squared-error
    /// reduction credited to each feature.
    #[default]
    BoostedStumps,
    /// Ridge on standardized features; importance is `|coefficient|`.
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DciConfig {
    pub regressor: Regressor,
    pub rounds: usize,
    pub shrinkage: f64,
    pub ridge_lambda: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for DciConfig {
    fn default() -> Self {
        Self {
            regressor: Regressor::BoostedStumps,
            rounds: 100,
            shrinkage: 0.1,
            ridge_lambda: 1.0,
            test_fraction: 0.25,
            split_seed: 0,
        }
    }
}

/// `d x F` nonnegative weights: how much latent `i` matters for factor `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl ImportanceMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let f = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || f == 0 {
            return Err(Error::Empty("importance matrix"));
        }
        if rows.iter().any(|r| r.len() != f) {
            return Err(Error::DimMismatch {
                expected: f,
                got: rows.iter().map(Vec::len).find(|&l| l != f).unwrap_or(0),
            });
        }
        if rows.iter().flatten().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Degenerate("importance entries must be finite and >= 0".into()));
        }
        if rows.iter().flatten().all(|&x| x == 0.0) {
            return Err(Error::Degenerate("importance matrix is all zero".into()));
        }
        Ok(Self { rows })
    }

    pub fn latents(&self) -> usize {
        self.rows.len()
    }

    pub fn factors(&self) -> usize {
        self.rows[0].len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Shannon entropy with log base `p.len()`, so it lies in `[0, 1]`. `p` must sum to 1.
pub fn normalized_entropy(p: &[f64]) -> f64 {
    if p.len() <= 1 {
        return 0.0;
    }
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    (h / (p.len() as f64).ln()).clamp(0.0, 1.0)
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciScores {
    pub disentanglement: f64,
    pub completeness: f64,
    pub per_latent_disentanglement: Vec<Option<f64>>,
    pub per_factor_completeness: Vec<Option<f64>>,
    /// Latents and factors left out because their importances are all zero.
    pub zero_latents: Vec<usize>,
    pub zero_factors: Vec<usize>,
}

/// Disentanglement (importance-weighted `1 - H(P_i)` over latents) and
/// completeness (mean of `1 - H(P_j)` over factors).
pub fn dci(r: &ImportanceMatrix) -> DciScores {
    let total: f64 = r.rows.iter().flatten().sum();
    let mut d = 0.0;
    let mut per_latent = Vec::with_capacity(r.latents());
    let mut zero_latents = Vec::new();
    for (i, row) in r.rows.iter().enumerate() {
        match normalize(row) {
            Some(p) => {
                let di = 1.0 - normalized_entropy(&p);
                d += di * row.iter().sum::<f64>() / total;
                per_latent.push(Some(di));
            }
            None => {
                zero_latents.push(i);
                per_latent.push(None);
            }
        }
    }
    let mut per_factor = Vec::with_capacity(r.factors());
    let mut zero_factors = Vec::new();
    for j in 0..r.factors() {
        match normalize(&r.column(j)) {
            Some(p) => per_factor.push(Some(1.0 - normalized_entropy(&p))),
            None => {
                zero_factors.push(j);
                per_factor.push(None);
            }
        }
    }
    let cs: Vec<f64> = per_factor.iter().flatten().copied().collect();
    DciScores {
        disentanglement: d.clamp(0.0, 1.0),
        completeness: (cs.iter().sum::<f64>() / cs.len() as f64).clamp(0.0, 1.0),
        per_latent_disentanglement: per_latent,
        per_factor_completeness: per_factor,
        zero_latents,
        zero_factors,
    }
}

trait Model {
    fn predict(&self, x: &[f64]) -> f64;
}

struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

struct Boosted {
    base: f64,
    shrinkage: f64,
    stumps: Vec<Stump>,
}

impl Model for Boosted {
    fn predict(&self, x: &[f64]) -> f64 {
        self.base
            + self.shrinkage
                * self
                    .stumps
                    .iter()
                    .map(|s| if x[s.feature] <= s.threshold { s.left } else { s.right })
                    .sum::<f64>()
    }
}

fn fit_boosted(x: &[&[f64]], y: &[f64], cfg: &DciConfig, importance: &mut [f64]) -> Boosted {
    let n = y.len();
    let d = importance.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut resid: Vec<f64> = y.iter().map(|v| v - base).collect();
    // Sort order per feature, computed once.
    let orders: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            o
        })
        .collect();
    let mut stumps = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let total: f64 = resid.iter().sum();
        let base_sse_term = total * total / n as f64;
        let mut best: Option<(f64, Stump)> = None;
        for (f, order) in orders.iter().enumerate() {
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += resid[order[k]];
                let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base_sse_term;
                if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                    best = Some((
                        gain,
                        Stump {
                            feature: f,
                            threshold: 0.5 * (a + b),
                            left: left_sum / nl,
                            right: right_sum / nr,
                        },
                    ));
                }
            }
        }
        let Some((gain, stump)) = best else { break };
        if gain <= 1e-12 {
            break;
        }
        importance[stump.feature] += gain;
        for (r, xi) in resid.iter_mut().zip(x) {
            *r -= cfg.shrinkage * if xi[stump.feature] <= stump.threshold { stump.left } else { stump.right };
        }
        stumps.push(stump);
    }
    Boosted {
        base,
        shrinkage: cfg.shrinkage,
        stumps,
    }
}

struct Ridge {
    mean: Vec<f64>,
    scale: Vec<f64>,
    coef: Vec<f64>,
    intercept: f64,
}

impl Model for Ridge {
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.coef)
                .map(|(((v, m), s), c)| c * (v - m) / s)
                .sum::<f64>()
    }
}

fn fit_ridge(x: &[&[f64]], y: &[f64], lambda: f64, importance: &mut [f64]) -> Result<Ridge> {
    let n = y.len();
    let d = importance.len();
    let mean: Vec<f64> = (0..d).map(|f| x.iter().map(|r| r[f]).sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|f| {
            let var = x.iter().map(|r| (r[f] - mean[f]).powi(2)).sum::<f64>() / n as f64;
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let xs = DMatrix::from_fn(n, d, |i, f| (x[i][f] - mean[f]) / scale[f]);
    let intercept = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - intercept));
    let mut gram = xs.transpose() * &xs;
    for k in 0..d {
        gram[(k, k)] += lambda.max(1e-9);
    }
    let rhs = xs.transpose() * yc;
    let coef = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("ridge system is not positive definite".into()))?
        .solve(&rhs);
    for (imp, c) in importance.iter_mut().zip(coef.iter()) {
        *imp += c.abs();
    }
    Ok(Ridge {
        mean,
        scale,
        coef: coef.iter().copied().collect(),
        intercept,
    })
}

/// Deterministic train/test split of `0..n`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_test = n_test.clamp(1.min(n), n.saturating_sub(1));
    let test = idx.split_off(n - n_test);
    (idx, test)
}

fn check_inputs(z: &[Vec<f64>], v: &[Vec<f64>]) -> Result<(usize, usize)> {
    if z.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: z.len(),
            got: v.len(),
        });
    }
    if z.len() < 20 {
        return Err(Error::InvalidConfig("need at least 20 samples".into()));
    }
    let d = z[0].len();
    let f = v[0].len();
    if d == 0 || f == 0 {
        return Err(Error::Empty("latent or factor columns"));
    }
    for (a, b) in z.iter().zip(v) {
        if a.len() != d || b.len() != f {
            return Err(Error::DimMismatch {
                expected: d,
                got: a.len(),
            });
        }
        if a.iter().chain(b).any(|x| !x.is_finite()) {
            return Err(Error::Degenerate("non-finite input".into()));
        }
    }
    Ok((d, f))
}

fn column_range(v: &[Vec<f64>], j: usize) -> (f64, f64) {
    v.iter()
        .map(|r| r[j])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// One regressor per factor, fit on the training split.
struct Fitted {
    importance: Vec<Vec<f64>>,
    /// Test MAE on min-max normalized factors; `None` for constant factors.
    mae: Vec<Option<f64>>,
}

fn fit_all(z: &[Vec<f64>], v: &[Vec<f64>], cfg: &DciConfig) -> Result<Fitted> {
    let (d, f) = check_inputs(z, v)?;
    let (train, test) = split_indices(z.len(), cfg.test_fraction, cfg.split_seed);
    let xt: Vec<&[f64]> = train.iter().map(|&i| z[i].as_slice()).collect();
    let mut importance = vec![vec![0.0; f]; d];
    let mut mae = Vec::with_capacity(f);
    for j in 0..f {
        let (lo, hi) = column_range(v, j);
        if hi - lo <= 0.0 {
            mae.push(None);
            continue;
        }
        let norm = |x: f64| (x - lo) / (hi - lo);
        let y: Vec<f64> = train.iter().map(|&i| norm(v[i][j])).collect();
        let mut imp = vec![0.0; d];
        let model: Box<dyn Model> = match cfg.regressor {
            Regressor::BoostedStumps => Box::new(fit_boosted(&xt, &y, cfg, &mut imp)),
            Regressor::Ridge => Box::new(fit_ridge(&xt, &y, cfg.ridge_lambda, &mut imp)?),
        };
        for (row, x) in importance.iter_mut().zip(imp) {
            row[j] = x;
        }
        let err = test
            .iter()
            .map(|&i| (model.predict(&z[i]) - norm(v[i][j])).abs())
            .sum::<f64>()
            / test.len() as f64;
        mae.push(Some(err));
    }
    Ok(Fitted { importance, mae })
}

/// Importance of each latent for each factor. Constant factor columns are an error.
pub fn fit_importance(z: &[Vec<f64>], v: &[Vec<f64>], cfg: &DciConfig) -> Result<ImportanceMatrix> {
    let fitted = fit_all(z, v, cfg)?;
    if let Some(j) = fitted.mae.iter().position(Option::is_none) {
        return Err(Error::Degenerate(format!("factor column {j} is constant")));
    }
    ImportanceMatrix::new(fitted.importance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Informativeness {
    pub informativeness: f64,
    pub per_factor: Vec<Option<f64>>,
    /// Constant factor columns, left out of the mean.
    pub skipped_factors: Vec<usize>,
}

fn informativeness_of(mae: &[Option<f64>]) -> Result<Informativeness> {
    let per_factor: Vec<Option<f64>> = mae.iter().map(|m| m.map(|e| (1.0 - e).clamp(0.0, 1.0))).collect();
    let vals: Vec<f64> = per_factor.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Err(Error::Degenerate("every factor column is constant".into()));
    }
    Ok(Informativeness {
        informativeness: (vals.iter().sum::<f64>() / vals.len() as f64).clamp(0.0, 1.0),
        skipped_factors: per_factor.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(j, _)| j).collect(),
        per_factor,
    })
}

/// Mean over factors of `1 - MAE` on the held-out split, factors min-max scaled to `[0, 1]`.
pub fn informativeness(z: &[Vec<f64>], v: &[Vec<f64>], cfg: &DciConfig) -> Result<Informativeness> {
    informativeness_of(&fit_all(z, v, cfg)?.mae)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciReport {
    pub importance: ImportanceMatrix,
    pub scores: DciScores,
    pub informativeness: Informativeness,
    pub config: DciConfig,
    pub notes: Vec<String>,
}

/// Importance, D, C and I from one set of fits. Constant factors are skipped and noted.
pub fn dci_report(z: &[Vec<f64>], v: &[Vec<f64>], cfg: &DciConfig) -> Result<DciReport> {
    let fitted = fit_all(z, v, cfg)?;
    let info = informativeness_of(&fitted.mae)?;
    let importance = ImportanceMatrix::new(fitted.importance)?;
    let scores = dci(&importance);
    let mut notes = vec![
        "entropy uses log base equal to the distribution length".to_string(),
        "completeness is the mean over factors".to_string(),
        "informativeness is 1 - mean absolute error on min-max scaled factors over the held-out split".to_string(),
    ];
    if !info.skipped_factors.is_empty() {
        notes.push(format!("constant factor columns skipped: {:?}", info.skipped_factors));
    }
    if !scores.zero_latents.is_empty() || !scores.zero_factors.is_empty() {
        notes.push(format!(
            "all-zero importance rows {:?} and columns {:?} excluded from normalization",
            scores.zero_latents, scores.zero_factors
        ));
    }
    Ok(DciReport {
        importance,
        scores,
        informativeness: info,
        config: cfg.clone(),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn mat(rows: &[&[f64]]) -> ImportanceMatrix {
        ImportanceMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn permutation_and_uniform() {
        let s = dci(&mat(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0], &[3.0, 0.0, 0.0]]));
        assert_eq!((s.disentanglement, s.completeness), (1.0, 1.0));
        let s = dci(&mat(&[&[1.0, 1.0], &[1.0, 1.0]]));
        assert!(s.disentanglement.abs() < 1e-12 && s.completeness.abs() < 1e-12);
    }

    #[test]
    fn two_by_two_entropy() {
        let s = dci(&mat(&[&[0.9, 0.1], &[0.1, 0.9]]));
        let h = -(0.9f64 * 0.9f64.log2() + 0.1 * 0.1f64.log2());
        assert!((s.disentanglement - (1.0 - h)).abs() < 1e-12);
        assert!((s.disentanglement - 0.531).abs() < 1e-3);
    }

    #[test]
    fn zero_rows_and_columns_are_excluded() {
        let s = dci(&mat(&[&[1.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(s.zero_latents, vec![1]);
        assert_eq!(s.zero_factors, vec![1]);
        assert_eq!(s.completeness, 1.0);
        assert!(ImportanceMatrix::new(vec![vec![0.0, 0.0]]).is_err());
        assert!(ImportanceMatrix::new(vec![vec![-1.0, 1.0]]).is_err());
    }

    fn noise(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }

    fn factors(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| vec![rng.random_range(0..2) as f64, rng.random_range(0..3) as f64, rng.random::<f64>()])
            .collect()
    }

    #[test]
    fn identity_representation_is_diagonal() {
        let v = factors(400, 1);
        for reg in [Regressor::BoostedStumps, Regressor::Ridge] {
            let cfg = DciConfig { regressor: reg, ..Default::default() };
            let r = fit_importance(&v, &v, &cfg).unwrap();
            for j in 0..3 {
                let col = r.column(j);
                let arg = (0..3).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
                assert_eq!(arg, j, "{reg:?}");
            }
            let rep = dci_report(&v, &v, &cfg).unwrap();
            assert!(rep.scores.disentanglement >= 0.9, "{reg:?} {:?}", rep.scores);
            assert!(rep.scores.completeness >= 0.9, "{reg:?} {:?}", rep.scores);
            assert!(rep.informativeness.informativeness >= 0.9, "{reg:?}");
        }
        let ridge = informativeness(&v, &v, &DciConfig { regressor: Regressor::Ridge, ..Default::default() }).unwrap();
        assert!(ridge.informativeness >= 0.99, "{ridge:?}");
    }

    #[test]
    fn noise_spreads_importance() {
        let z = noise(1000, 4, 2);
        let v = factors(1000, 3);
        let r = fit_importance(&z, &v, &DciConfig::default()).unwrap();
        for row in &r.rows {
            let p = normalize(row).unwrap();
            assert!(normalized_entropy(&p) > 0.5, "{row:?}");
        }
    }

    #[test]
    fn noise_informativeness_is_a_coin_flip() {
        let z = noise(2000, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random_range(0..2) as f64]).collect();
        let i = informativeness(&z, &v, &DciConfig { regressor: Regressor::Ridge, ..Default::default() }).unwrap();
        assert!((i.informativeness - 0.5).abs() < 0.05, "{i:?}");
    }

    #[test]
    fn constant_factor() {
        let z = noise(40, 2, 1);
        let v: Vec<Vec<f64>> = z.iter().map(|r| vec![1.0, r[0]]).collect();
        assert!(matches!(fit_importance(&z, &v, &DciConfig::default()), Err(Error::Degenerate(_))));
        let i = informativeness(&z, &v, &DciConfig::default()).unwrap();
        assert_eq!(i.skipped_factors, vec![0]);
        assert!(i.per_factor[0].is_none());
    }

    #[test]
    fn single_latent_single_factor() {
        let z = noise(50, 1, 9);
        let r = fit_importance(&z, &z, &DciConfig::default()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0][0] > 0.0);
        assert!(fit_importance(&z[..10], &z[..10], &DciConfig::default()).is_err());
    }

    fn small_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..5, 1usize..5).prop_flat_map(|(d, f)| {
            proptest::collection::vec(proptest::collection::vec(0.01f64..10.0, f), d)
        })
    }

    proptest! {
        #[test]
        fn invariant_to_scale_and_relabeling(rows in small_matrix(), alpha in 0.01f64..100.0, seed in 0u64..100) {
            let r = ImportanceMatrix::new(rows.clone()).unwrap();
            let base = dci(&r);
            prop_assert!((0.0..=1.0).contains(&base.disentanglement));
            prop_assert!((0.0..=1.0).contains(&base.completeness));
            let scaled = ImportanceMatrix::new(rows.iter().map(|row| row.iter().map(|x| x * alpha).collect()).collect()).unwrap();
            let s = dci(&scaled);
            prop_assert!((s.disentanglement - base.disentanglement).abs() < 1e-9);
            prop_assert!((s.completeness - base.completeness).abs() < 1e-9);

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rp: Vec<usize> = (0..rows.len()).collect();
            let mut cp: Vec<usize> = (0..rows[0].len()).collect();
            rp.shuffle(&mut rng);
            cp.shuffle(&mut rng);
            let permuted: Vec<Vec<f64>> = rp.iter().map(|&i| cp.iter().map(|&j| rows[i][j]).collect()).collect();
            let p = dci(&ImportanceMatrix::new(permuted).unwrap());
            prop_assert!((p.disentanglement - base.disentanglement).abs() < 1e-9);
            prop_assert!((p.completeness - base.completeness).abs() < 1e-9);
        }
    }
}
