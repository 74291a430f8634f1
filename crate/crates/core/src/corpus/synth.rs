//! Synthetic corpora where embeddings encode attributes.
//!
//! Each view draws one random unit prototype per (attribute, class). A record's
//! embedding is `prototype_scale * sum of its class prototypes` plus isotropic
//! Gaussian noise, so records that share attribute values are closer in cosine.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Corpus, EmbeddingView, ImageRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub name: String,
    pub dim: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub sensitive: Vec<String>,
    pub views: Vec<ViewSpec>,
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub prototype_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl SynthConfig {
    /// `n` records, `attributes` attributes with 2..=4 classes, and three views
    /// named after the roles they stand in for (facenet 128, mix 64, hog 256).
    pub fn standard(n: usize, attributes: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n,
            attributes: (0..attributes)
                .map(|i| AttributeSpec {
                    name: format!("attr{i}"),
                    classes: 2 + i % 3,
                })
                .collect(),
            sensitive: (0..attributes.min(2)).map(|i| format!("attr{i}")).collect(),
            views: [("facenet", 128), ("mix", 64), ("hog", 256)]
                .into_iter()
                .map(|(name, dim)| ViewSpec {
                    name: name.into(),
                    dim,
                    noise_sigma,
                })
                .collect(),
            seed,
            prototype_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if !(self.prototype_scale > 0.0) {
            return bad("prototype_scale must be > 0".into());
        }
        for a in &self.attributes {
            if a.classes < 2 {
                return bad(format!("attribute {:?} needs >= 2 classes", a.name));
            }
        }
        for v in &self.views {
            if v.dim == 0 || !(v.noise_sigma >= 0.0) {
                return bad(format!("view {:?} needs dim >= 1 and noise_sigma >= 0", v.name));
            }
        }
        for s in &self.sensitive {
            if !self.attributes.iter().any(|a| &a.name == s) {
                return Err(Error::UnknownAttribute(s.clone()));
            }
        }
        Ok(())
    }
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::vector::norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn synthesize_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes: Vec<Vec<usize>> = (0..cfg.n)
        .map(|_| cfg.attributes.iter().map(|a| rng.random_range(0..a.classes)).collect())
        .collect();

    let width = cfg.n.to_string().len().max(4);
    let records = classes
        .iter()
        .enumerate()
        .map(|(i, cls)| ImageRecord {
            id: format!("img{i:0width$}"),
            attributes: cfg
                .attributes
                .iter()
                .zip(cls)
                .map(|(a, &c)| (a.name.clone(), c.to_string()))
                .collect(),
            image_uri: None,
        })
        .collect();

    let mut views = Vec::with_capacity(cfg.views.len());
    for (vi, spec) in cfg.views.iter().enumerate() {
        // Per-view stream so adding a view never perturbs the others.
        let mut vrng = ChaCha8Rng::seed_from_u64(cfg.seed);
        vrng.set_stream(vi as u64 + 1);
        let prototypes: Vec<Vec<Vec<f64>>> = cfg
            .attributes
            .iter()
            .map(|a| (0..a.classes).map(|_| unit_vector(spec.dim, &mut vrng)).collect())
            .collect();
        let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        let mut data = Vec::with_capacity(cfg.n * spec.dim);
        for cls in &classes {
            let mut x = vec![0.0f64; spec.dim];
            for (protos, &c) in prototypes.iter().zip(cls) {
                crate::vector::axpy(cfg.prototype_scale, &protos[c], &mut x);
            }
            if spec.noise_sigma > 0.0 {
                x.iter_mut().for_each(|xi| *xi += noise.sample(&mut vrng));
            }
            data.extend(x.iter().map(|&v| v as f32));
        }
        views.push(EmbeddingView::new(spec.name.clone(), spec.dim, data)?);
    }

    let schema: BTreeMap<String, Vec<String>> = cfg
        .attributes
        .iter()
        .map(|a| (a.name.clone(), (0..a.classes).map(|c| c.to_string()).collect()))
        .collect();
    Corpus::new(records, views, schema, cfg.sensitive.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::cosine;

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig::standard(50, 3, 0.1, 9);
        assert_eq!(synthesize_corpus(&cfg).unwrap(), synthesize_corpus(&cfg).unwrap());
        let other = SynthConfig { seed: 10, ..cfg.clone() };
        assert_ne!(synthesize_corpus(&cfg).unwrap(), synthesize_corpus(&other).unwrap());
    }

    #[test]
    fn noiseless_twins_are_identical() {
        let c = synthesize_corpus(&SynthConfig::standard(60, 2, 0.0, 1)).unwrap();
        let (_, codes) = c.factor_codes();
        let (a, b) = (0..60)
            .flat_map(|i| (i + 1..60).map(move |j| (i, j)))
            .find(|&(i, j)| codes[i] == codes[j])
            .unwrap();
        for v in c.views() {
            assert_eq!(v.row(a), v.row(b));
            assert!((cosine(&v.row_f64(a), &v.row_f64(b)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shared_attributes_raise_similarity() {
        let mut cfg = SynthConfig::standard(200, 2, 0.0, 4);
        cfg.attributes.iter_mut().for_each(|a| a.classes = 2);
        let c = synthesize_corpus(&cfg).unwrap();
        let (_, codes) = c.factor_codes();
        for v in c.views() {
            let rows: Vec<Vec<f64>> = (0..200).map(|i| v.row_f64(i)).collect();
            let (mut same, mut ns, mut diff, mut nd) = (0.0, 0, 0.0, 0);
            for i in 0..200 {
                for j in i + 1..200 {
                    let s = cosine(&rows[i], &rows[j]);
                    if codes[i] == codes[j] {
                        same += s;
                        ns += 1;
                    } else {
                        diff += s;
                        nd += 1;
                    }
                }
            }
            assert!(same / ns as f64 > diff / nd as f64, "view {}", v.name());
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = SynthConfig::standard(10, 2, 0.1, 0);
        cfg.attributes[0].classes = 1;
        assert!(synthesize_corpus(&cfg).is_err());
        let mut cfg = SynthConfig::standard(10, 2, 0.1, 0);
        cfg.views[0].noise_sigma = -1.0;
        assert!(synthesize_corpus(&cfg).is_err());
        assert!(synthesize_corpus(&SynthConfig::standard(0, 2, 0.1, 0)).is_err());
    }
}
