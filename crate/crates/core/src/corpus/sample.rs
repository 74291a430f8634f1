use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::Corpus;
use crate::{Error, Result};

/// Attribute name to accepted values. Attributes not listed (or listed with an
/// empty value set) accept anything.
pub type AttributeFilter = BTreeMap<String, Vec<String>>;

pub(crate) fn validate_filter(corpus: &Corpus, filter: &AttributeFilter) -> Result<()> {
    for (attr, vals) in filter {
        let allowed = corpus
            .schema()
            .get(attr)
            .ok_or_else(|| Error::UnknownAttribute(attr.clone()))?;
        if let Some(v) = vals.iter().find(|v| !allowed.contains(v)) {
            return Err(Error::UnknownAttributeValue {
                index: 0,
                attribute: attr.clone(),
                value: v.clone(),
            });
        }
    }
    Ok(())
}

pub(crate) fn matches(corpus: &Corpus, i: usize, filter: &AttributeFilter) -> bool {
    let attrs = &corpus.record(i).attributes;
    filter
        .iter()
        .all(|(a, vals)| vals.is_empty() || attrs.get(a).is_some_and(|v| vals.contains(v)))
}

/// Draw up to `count` indices from `pool`, round-robin over the cross-product of
/// sensitive-attribute values. Cell order is reshuffled every round; exhausted
/// cells are skipped.
pub fn stratified_indices<R: Rng + ?Sized>(corpus: &Corpus, pool: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    let sensitive = corpus.sensitive_attributes();
    let mut cells: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
    for &i in pool {
        let key = sensitive
            .iter()
            .map(|s| corpus.record(i).attributes[s].as_str())
            .collect();
        cells.entry(key).or_default().push(i);
    }
    let mut cells: Vec<Vec<usize>> = cells.into_values().collect();
    for c in &mut cells {
        c.shuffle(rng);
    }
    let mut out = Vec::with_capacity(count.min(pool.len()));
    let mut order: Vec<usize> = (0..cells.len()).collect();
    let mut round = 0;
    while out.len() < count {
        order.retain(|&c| cells[c].len() > round);
        if order.is_empty() {
            break;
        }
        order.shuffle(rng);
        for &c in &order {
            if out.len() == count {
                break;
            }
            out.push(cells[c][round]);
        }
        round += 1;
    }
    out
}

/// Ids of up to `count` records matching `filter`, balanced over sensitive attributes.
pub fn stratified_sample<R: Rng + ?Sized>(
    corpus: &Corpus,
    filter: &AttributeFilter,
    count: usize,
    rng: &mut R,
) -> Result<Vec<String>> {
    validate_filter(corpus, filter)?;
    let pool: Vec<usize> = (0..corpus.len()).filter(|&i| matches(corpus, i, filter)).collect();
    Ok(stratified_indices(corpus, &pool, count, rng)
        .into_iter()
        .map(|i| corpus.id(i).to_string())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::tiny;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_count_is_empty() {
        let c = tiny(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(stratified_sample(&c, &AttributeFilter::new(), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn balanced_binary_split() {
        let c = tiny(40);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ids = stratified_sample(&c, &AttributeFilter::new(), 10, &mut rng).unwrap();
            let a = ids
                .iter()
                .filter(|id| c.record(c.index_of(id).unwrap()).attributes["g"] == "a")
                .count();
            assert_eq!((a, ids.len() - a), (5, 5));
        }
    }

    #[test]
    fn exclusive_filter_is_empty_and_unknown_attribute_errors() {
        let c = tiny(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut f = AttributeFilter::new();
        f.insert("g".into(), vec!["a".into()]);
        let ids = stratified_sample(&c, &f, 3, &mut rng).unwrap();
        assert_eq!(ids.len(), 3);
        let pool: Vec<usize> = vec![1, 3];
        assert!(stratified_indices(&c, &pool, 5, &mut rng).len() == 2);
        let mut f = AttributeFilter::new();
        f.insert("h".into(), vec!["a".into()]);
        assert!(matches!(stratified_sample(&c, &f, 3, &mut rng), Err(Error::UnknownAttribute(_))));
    }

    #[test]
    fn nothing_matches() {
        let c = tiny(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty_pool: Vec<usize> = vec![];
        assert!(stratified_indices(&c, &empty_pool, 5, &mut rng).is_empty());
    }

    proptest! {
        #[test]
        fn no_duplicates_and_filter_respected(n in 1usize..60, count in 0usize..80, seed in 0u64..1000, only_b in any::<bool>()) {
            let c = tiny(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut f = AttributeFilter::new();
            if only_b {
                f.insert("g".into(), vec!["b".into()]);
            }
            let ids = stratified_sample(&c, &f, count, &mut rng).unwrap();
            let set: std::collections::HashSet<_> = ids.iter().collect();
            prop_assert_eq!(set.len(), ids.len());
            let matching = (0..n).filter(|&i| matches(&c, i, &f)).count();
            prop_assert_eq!(ids.len(), count.min(matching));
            for id in &ids {
                prop_assert!(matches(&c, c.index_of(id).unwrap(), &f));
            }
        }
    }
}
