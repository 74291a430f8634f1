use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDistribution {
    pub attribute: String,
    pub classes: Vec<String>,
    pub full: Vec<f64>,
    pub selected: Vec<f64>,
    pub tv_distance: f64,
}

/// `0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn histogram(corpus: &Corpus, attr: &str, classes: &[String], idx: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut h = vec![0.0; classes.len()];
    let mut n = 0.0;
    for i in idx {
        let v = &corpus.record(i).attributes[attr];
        if let Some(p) = classes.iter().position(|c| c == v) {
            h[p] += 1.0;
        }
        n += 1.0;
    }
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Per-attribute class histograms of the whole corpus and of `selected`, with their TV distance.
pub fn distribution_similarity<S: AsRef<str>>(corpus: &Corpus, selected: &[S]) -> Result<Vec<AttributeDistribution>> {
    if selected.is_empty() {
        return Err(Error::Empty("selection"));
    }
    let mut idx = Vec::with_capacity(selected.len());
    let mut seen = HashSet::new();
    for id in selected {
        let i = corpus.index_of(id.as_ref())?;
        if seen.insert(i) {
            idx.push(i);
        }
    }
    Ok(corpus
        .schema()
        .iter()
        .map(|(attr, classes)| {
            let full = histogram(corpus, attr, classes, 0..corpus.len());
            let sel = histogram(corpus, attr, classes, idx.iter().copied());
            AttributeDistribution {
                attribute: attr.clone(),
                classes: classes.clone(),
                tv_distance: total_variation(&full, &sel).clamp(0.0, 1.0),
                full,
                selected: sel,
            }
        })
        .collect())
}
