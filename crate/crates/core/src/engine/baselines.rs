//! Baseline rankers that work directly in the base embedding space.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;

use super::{BaseEmbeddings, RocchioParams, ScoreTable};
use crate::corpus::Corpus;
use crate::vector::{self, ZERO_NORM};

/// Candidate indices ordered best first: higher score, then lexicographically smaller id.
pub fn rank_by_scores(corpus: &Corpus, candidates: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| corpus.id(candidates[a]).cmp(corpus.id(candidates[b])))
    });
    order.into_iter().map(|i| candidates[i]).collect()
}

/// Mean of the given base rows; zero vector for an empty set.
pub(crate) fn base_centroid(base: &BaseEmbeddings, rows: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; base.dim()];
    if rows.is_empty() {
        return c;
    }
    for &i in rows {
        vector::axpy(1.0, base.row(i), &mut c);
    }
    let inv = 1.0 / rows.len() as f64;
    c.iter_mut().for_each(|x| *x *= inv);
    c
}

pub(crate) fn cosine_table(corpus: &Corpus, base: &BaseEmbeddings, query: &[f64], candidates: &[usize]) -> ScoreTable {
    let scores = candidates.iter().map(|&i| vector::cosine(base.row(i), query)).collect();
    ScoreTable::new(corpus, candidates.to_vec(), scores)
}

/// Rank `candidates` by cosine similarity to the base-space centroid of `similar`.
/// `None` when there is nothing to take a centroid of.
pub fn centroid_ranking(corpus: &Corpus, base: &BaseEmbeddings, similar: &[usize], candidates: &[usize]) -> Option<ScoreTable> {
    if similar.is_empty() {
        return None;
    }
    let c = base_centroid(base, similar);
    Some(cosine_table(corpus, base, &c, candidates))
}

/// Rocchio query state: `q <- alpha q + beta centroid(S) - gamma centroid(D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocchioState {
    pub query: Vec<f64>,
    pub params: RocchioParams,
}

impl RocchioState {
    pub fn new(dim: usize, params: RocchioParams) -> Self {
        Self {
            query: vec![0.0; dim],
            params,
        }
    }

    pub fn update(&mut self, base: &BaseEmbeddings, similar: &[usize], dissimilar: &[usize]) {
        let p = self.params;
        let cs = base_centroid(base, similar);
        let cd = base_centroid(base, dissimilar);
        for ((q, s), d) in self.query.iter_mut().zip(&cs).zip(&cd) {
            *q = p.alpha * *q + p.beta * s - p.gamma * d;
        }
    }

    pub fn is_zero(&self) -> bool {
        vector::norm(&self.query) < ZERO_NORM
    }

    pub fn scores(&self, corpus: &Corpus, base: &BaseEmbeddings, candidates: &[usize]) -> Option<ScoreTable> {
        (!self.is_zero()).then(|| cosine_table(corpus, base, &self.query, candidates))
    }
}

/// Update the query with this round's labels, then return the `count` best candidates.
pub fn rocchio_recommend(
    state: &mut RocchioState,
    similar: &[usize],
    dissimilar: &[usize],
    corpus: &Corpus,
    base: &BaseEmbeddings,
    candidates: &[usize],
    count: usize,
) -> Vec<usize> {
    state.update(base, similar, dissimilar);
    match state.scores(corpus, base, candidates) {
        Some(t) => t.ranking.into_iter().take(count).collect(),
        None => Vec::new(),
    }
}

/// `count` candidates drawn uniformly without replacement.
pub fn random_recommend<R: Rng + ?Sized>(candidates: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    index::sample(rng, candidates.len(), count.min(candidates.len()))
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::tiny;
    use crate::engine::EngineConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rocchio_fixtures() {
        let base = BaseEmbeddings::from_rows(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut st = RocchioState::new(2, RocchioParams { alpha: 1.0, beta: 1.0, gamma: 0.0 });
        st.update(&base, &[0], &[]);
        assert_eq!(st.query, vec![1.0, 0.0]);
        st.update(&base, &[], &[]);
        assert_eq!(st.query, vec![1.0, 0.0]);

        let mut st = RocchioState::new(2, RocchioParams { alpha: 1.0, beta: 0.75, gamma: 0.15 });
        st.update(&base, &[0], &[1]);
        assert_eq!(st.query, vec![0.75, -0.15]);
    }

    #[test]
    fn rocchio_recommends_nearest_to_query() {
        let c = tiny(6);
        let base = BaseEmbeddings::from_corpus(&c, &EngineConfig { view: "v".into(), ..Default::default() }).unwrap();
        let mut st = RocchioState::new(2, RocchioParams::default());
        // Rows are (i, 1): a similar row 5 pulls the query toward large i.
        let got = rocchio_recommend(&mut st, &[5], &[0], &c, &base, &[1, 2, 3, 4], 2);
        assert_eq!(got, vec![4, 3]);
    }

    #[test]
    fn centroid_of_one_matches_cosine_to_it() {
        let c = tiny(8);
        let base = BaseEmbeddings::from_corpus(&c, &EngineConfig { view: "v".into(), ..Default::default() }).unwrap();
        let cands: Vec<usize> = (1..8).collect();
        let t = centroid_ranking(&c, &base, &[3], &cands).unwrap();
        let scores: Vec<f64> = cands.iter().map(|&i| vector::cosine(base.row(i), base.row(3))).collect();
        assert_eq!(t.ranking, rank_by_scores(&c, &cands, &scores));
        assert!(centroid_ranking(&c, &base, &[], &cands).is_none());
    }

    #[test]
    fn ties_break_by_id() {
        let c = tiny(4);
        let got = rank_by_scores(&c, &[3, 1, 2], &[0.5, 0.5, 0.9]);
        assert_eq!(got, vec![2, 1, 3]);
    }

    #[test]
    fn random_is_deterministic_and_unique() {
        let cands: Vec<usize> = (0..100).collect();
        let a = random_recommend(&cands, 16, &mut ChaCha8Rng::seed_from_u64(3));
        let b = random_recommend(&cands, 16, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let set: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(set.len(), 16);
        assert_eq!(random_recommend(&cands[..3], 16, &mut ChaCha8Rng::seed_from_u64(3)).len(), 3);
    }

    #[test]
    fn random_covers_uniformly() {
        // 10k draws of 1 from 20 candidates: chi-square with 19 dof. The 3-sigma
        // band for that statistic is 19 +- 3*sqrt(38), so require < 37.5.
        let cands: Vec<usize> = (0..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 20];
        for _ in 0..10_000 {
            counts[random_recommend(&cands, 1, &mut rng)[0]] += 1;
        }
        let expected = 500.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 19.0 + 3.0 * 38f64.sqrt(), "chi2 = {chi2}");
    }
}
