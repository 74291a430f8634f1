//! Separating-cluster loss, its alternate form, and the centroid scores.
//!
//! All functions take projected embeddings. The N-pair term's denominator sums
//! over the negative set only; the positive is not added to it.

use serde::{Deserialize, Serialize};

use crate::vector::{self, ZERO_NORM};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Which training objective (and matching scoring rule) a session uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Cluster the similar set against the dissimilar set; rank by [`score`].
    #[default]
    Scloss,
    /// Cluster both sets symmetrically; rank by [`score_alt`].
    SclossAlt,
}

impl LossKind {
    pub fn min_dissimilar(self) -> usize {
        match self {
            LossKind::Scloss => 1,
            LossKind::SclossAlt => 2,
        }
    }
}

fn check_dims<V: AsRef<[f64]>>(dim: usize, vs: &[V]) -> Result<()> {
    for v in vs {
        if v.as_ref().len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// `-log( exp(sim(e,e')/tau) / sum_{k in U} exp(sim(e,k)/tau) )`, via log-sum-exp.
pub fn npair_term<V: AsRef<[f64]>>(e: &[f64], e_pos: &[f64], negatives: &[V], tau: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Empty("negative set"));
    }
    check_dims(e.len(), &[e_pos])?;
    check_dims(e.len(), negatives)?;
    let logits: Vec<f64> = negatives
        .iter()
        .map(|k| vector::cosine(e, k.as_ref()) / tau)
        .collect();
    Ok(-vector::cosine(e, e_pos) / tau + vector::log_sum_exp(&logits))
}

/// Unit vectors and norms for a set, used to share work across pairwise sims.
struct Normalized {
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl Normalized {
    fn new<V: AsRef<[f64]>>(vs: &[V]) -> Self {
        let mut units = Vec::with_capacity(vs.len());
        let mut norms = Vec::with_capacity(vs.len());
        for v in vs {
            let v = v.as_ref();
            let n = vector::norm(v);
            norms.push(n);
            if n < ZERO_NORM {
                units.push(vec![0.0; v.len()]);
            } else {
                units.push(v.iter().map(|x| x / n).collect());
            }
        }
        Self { units, norms }
    }

    fn sim(&self, i: usize, other: &Normalized, j: usize) -> f64 {
        vector::dot(&self.units[i], &other.units[j]).clamp(-1.0, 1.0)
    }

    /// Add `coef * d sim(self_i, other_j) / d self_i` into `grad`.
    fn add_grad(&self, i: usize, other: &Normalized, j: usize, sim: f64, coef: f64, grad: &mut [f64]) {
        let n = self.norms[i];
        if n < ZERO_NORM || other.norms[j] < ZERO_NORM {
            return;
        }
        let a = &self.units[i];
        let b = &other.units[j];
        let c = coef / n;
        for ((g, &ai), &bi) in grad.iter_mut().zip(a).zip(b) {
            *g += c * (bi - sim * ai);
        }
    }
}

/// `sum_{x in P} sum_{y in P - {x}} l_N(x, y)` with gradients w.r.t. every element
/// of `P` and `N`, each scaled by `scale`.
fn separating_sum<V: AsRef<[f64]>>(
    pos: &[V],
    neg: &[V],
    tau: f64,
    scale: f64,
    grad_pos: &mut [Vec<f64>],
    grad_neg: &mut [Vec<f64>],
) -> f64 {
    let np = Normalized::new(pos);
    let nn = Normalized::new(neg);
    let n = pos.len();
    let mut total = 0.0;
    for x in 0..n {
        let logits: Vec<f64> = (0..neg.len()).map(|k| np.sim(x, &nn, k) / tau).collect();
        let lse = vector::log_sum_exp(&logits);
        total += (n - 1) as f64 * lse;
        let weights = vector::softmax(&logits);
        for (k, w) in weights.iter().enumerate() {
            let s = logits[k] * tau;
            let coef = scale * (n - 1) as f64 * w / tau;
            np.add_grad(x, &nn, k, s, coef, &mut grad_pos[x]);
            nn.add_grad(k, &np, x, s, coef, &mut grad_neg[k]);
        }
        for y in 0..n {
            if y == x {
                continue;
            }
            let s = np.sim(x, &np, y);
            total -= s / tau;
            let coef = -scale / tau;
            np.add_grad(x, &np, y, s, coef, &mut grad_pos[x]);
            np.add_grad(y, &np, x, s, coef, &mut grad_pos[y]);
        }
    }
    total * scale
}

fn check_sets<V: AsRef<[f64]>>(s: &[V], d: &[V], min_d: usize) -> Result<usize> {
    if s.len() < 2 || d.len() < min_d {
        return Err(Error::BatchTooSmall {
            similar: s.len(),
            dissimilar: d.len(),
            need_similar: 2,
            need_dissimilar: min_d,
        });
    }
    let dim = s[0].as_ref().len();
    check_dims(dim, s)?;
    check_dims(dim, d)?;
    Ok(dim)
}

/// Separating cluster loss: the mean N-pair term over ordered pairs of distinct
/// similar projections, with the dissimilar projections as negatives.
pub fn scloss<V: AsRef<[f64]>>(s: &[V], d: &[V], tau: f64) -> Result<f64> {
    Ok(loss_with_grad(LossKind::Scloss, s, d, tau)?.value)
}

/// Symmetric variant that also clusters the dissimilar set against the similar one.
pub fn scloss_alt<V: AsRef<[f64]>>(s: &[V], d: &[V], tau: f64) -> Result<f64> {
    Ok(loss_with_grad(LossKind::SclossAlt, s, d, tau)?.value)
}

/// Loss value with gradients w.r.t. each projected embedding.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad_similar: Vec<Vec<f64>>,
    pub grad_dissimilar: Vec<Vec<f64>>,
}

pub fn loss_with_grad<V: AsRef<[f64]>>(kind: LossKind, s: &[V], d: &[V], tau: f64) -> Result<LossGrad> {
    LossConfig { tau }.validate()?;
    let dim = check_sets(s, d, kind.min_dissimilar())?;
    let mut gs = vec![vec![0.0; dim]; s.len()];
    let mut gd = vec![vec![0.0; dim]; d.len()];
    let pairs = |n: usize| (n * (n - 1)) as f64;
    let value = match kind {
        LossKind::Scloss => separating_sum(s, d, tau, 1.0 / pairs(s.len()), &mut gs, &mut gd),
        LossKind::SclossAlt => {
            separating_sum(s, d, tau, 0.5 / pairs(s.len()), &mut gs, &mut gd)
                + separating_sum(d, s, tau, 0.5 / pairs(d.len()), &mut gd, &mut gs)
        }
    };
    Ok(LossGrad {
        value,
        grad_similar: gs,
        grad_dissimilar: gd,
    })
}

/// NT-Xent over `2B` vectors where `views[i]` and `views[i ^ 1]` are the two
/// augmentations of one sample. Returns the mean loss over all anchors and the
/// gradient for every vector.
pub fn nt_xent_with_grad(views: &[Vec<f64>], tau: f64, include_positive_in_denominator: bool) -> Result<(f64, Vec<Vec<f64>>)> {
    LossConfig { tau }.validate()?;
    let m = views.len();
    if m < 4 || !m.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "nt-xent needs an even number (>= 4) of views, got {m}"
        )));
    }
    let dim = views[0].len();
    check_dims(dim, views)?;
    let nv = Normalized::new(views);
    let mut grads = vec![vec![0.0; dim]; m];
    let scale = 1.0 / m as f64;
    let mut total = 0.0;
    for i in 0..m {
        let p = i ^ 1;
        let cands: Vec<usize> = (0..m)
            .filter(|&k| k != i && (include_positive_in_denominator || k != p))
            .collect();
        let logits: Vec<f64> = cands.iter().map(|&k| nv.sim(i, &nv, k) / tau).collect();
        let sp = nv.sim(i, &nv, p);
        total += -sp / tau + vector::log_sum_exp(&logits);
        nv.add_grad(i, &nv, p, sp, -scale / tau, &mut grads[i]);
        nv.add_grad(p, &nv, i, sp, -scale / tau, &mut grads[p]);
        for (w, &k) in vector::softmax(&logits).iter().zip(&cands) {
            let s = nv.sim(i, &nv, k);
            let coef = scale * w / tau;
            nv.add_grad(i, &nv, k, s, coef, &mut grads[i]);
            nv.add_grad(k, &nv, i, s, coef, &mut grads[k]);
        }
    }
    Ok((total * scale, grads))
}

/// Cosine similarity between `u` and the centroid of `similar`.
pub fn score<V: AsRef<[f64]>>(u: &[f64], similar: &[V]) -> Result<f64> {
    let c = vector::mean(similar)?;
    vector::cosine_sim(u, &c)
}

/// `sim(u, mean similar) - sim(u, mean dissimilar)`, in `[-2, 2]`.
pub fn score_alt<V: AsRef<[f64]>>(u: &[f64], similar: &[V], dissimilar: &[V]) -> Result<f64> {
    let cs = vector::mean(similar)?;
    let cd = vector::mean(dissimilar)?;
    Ok(vector::cosine_sim(u, &cs)? - vector::cosine_sim(u, &cd)?)
}
