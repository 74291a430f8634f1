//! Image records, their categorical attributes, and named embedding views.

mod io;
pub(crate) mod sample;
mod synth;

pub use io::{load_corpus, read_embedding_file, save_corpus, write_embedding_file, Manifest, ManifestRecord, ManifestView, EMBEDDING_MAGIC};
pub use sample::{stratified_indices, stratified_sample, AttributeFilter};
pub use synth::{synthesize_corpus, AttributeSpec, SynthConfig, ViewSpec};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_uri: Option<String>,
}

/// One dense representation of every record, stored as `f32` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingView {
    name: String,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingView {
    pub fn new(name: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if dim == 0 {
            return Err(Error::InvalidConfig(format!("view {name:?}: dim must be >= 1")));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidConfig(format!(
                "view {name:?}: {} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { view: name, index: pos / dim });
        }
        Ok(Self { name, dim, data })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| x as f64).collect()
    }
}

/// Records plus views. Immutable once built; share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<ImageRecord>,
    views: Vec<EmbeddingView>,
    schema: BTreeMap<String, Vec<String>>,
    sensitive: Vec<String>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validate and assemble a corpus. `schema` maps attribute name to its
    /// allowed values.
    pub fn new(
        records: Vec<ImageRecord>,
        views: Vec<EmbeddingView>,
        schema: BTreeMap<String, Vec<String>>,
        sensitive: Vec<String>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { id: r.id.clone(), index: i });
            }
            for (attr, allowed) in &schema {
                match r.attributes.get(attr) {
                    None => {
                        return Err(Error::MissingAttribute {
                            index: i,
                            attribute: attr.clone(),
                        })
                    }
                    Some(v) if !allowed.contains(v) => {
                        return Err(Error::UnknownAttributeValue {
                            index: i,
                            attribute: attr.clone(),
                            value: v.clone(),
                        })
                    }
                    _ => {}
                }
            }
            if let Some(extra) = r.attributes.keys().find(|k| !schema.contains_key(*k)) {
                return Err(Error::UnknownAttribute(extra.clone()));
            }
        }
        let mut names = std::collections::HashSet::new();
        for v in &views {
            if !names.insert(v.name.clone()) {
                return Err(Error::InvalidConfig(format!("duplicate view name {:?}", v.name)));
            }
            if v.rows() != records.len() {
                return Err(Error::RowCountMismatch {
                    view: v.name.clone(),
                    rows: v.rows(),
                    records: records.len(),
                });
            }
        }
        if let Some(s) = sensitive.iter().find(|s| !schema.contains_key(*s)) {
            return Err(Error::UnknownAttribute(s.clone()));
        }
        Ok(Self {
            records,
            views,
            schema,
            sensitive,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &ImageRecord {
        &self.records[i]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.records[i].id
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn views(&self) -> &[EmbeddingView] {
        &self.views
    }

    pub fn view(&self, name: &str) -> Result<&EmbeddingView> {
        self.views
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownView(name.to_string()))
    }

    pub fn schema(&self) -> &BTreeMap<String, Vec<String>> {
        &self.schema
    }

    pub fn sensitive_attributes(&self) -> &[String] {
        &self.sensitive
    }

    /// Attribute values as class indices into the schema, one column per attribute
    /// in schema order.
    pub fn factor_codes(&self) -> (Vec<String>, Vec<Vec<usize>>) {
        let names: Vec<String> = self.schema.keys().cloned().collect();
        let rows = self
            .records
            .iter()
            .map(|r| {
                self.schema
                    .iter()
                    .map(|(a, vals)| vals.iter().position(|v| *v == r.attributes[a]).unwrap())
                    .collect()
            })
            .collect();
        (names, rows)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, g: &str) -> ImageRecord {
        ImageRecord {
            id: id.into(),
            attributes: [("g".to_string(), g.to_string())].into(),
            image_uri: None,
        }
    }

    fn schema() -> BTreeMap<String, Vec<String>> {
        [("g".to_string(), vec!["a".to_string(), "b".to_string()])].into()
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Corpus::new(vec![rec("x", "a"), rec("x", "b")], vec![], schema(), vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { index: 1, .. }));
    }

    #[test]
    fn rejects_unknown_value_and_missing_attribute() {
        let err = Corpus::new(vec![rec("x", "z")], vec![], schema(), vec![]).unwrap_err();
        assert!(matches!(err, Error::UnknownAttributeValue { index: 0, .. }));
        let bare = ImageRecord {
            id: "y".into(),
            attributes: BTreeMap::new(),
            image_uri: None,
        };
        let err = Corpus::new(vec![bare], vec![], schema(), vec![]).unwrap_err();
        assert!(matches!(err, Error::MissingAttribute { .. }));
    }

    #[test]
    fn rejects_row_mismatch_and_non_finite() {
        let v = EmbeddingView::new("v", 2, vec![0.0; 4]).unwrap();
        let err = Corpus::new(vec![rec("a", "a"), rec("b", "a"), rec("c", "b")], vec![v], schema(), vec![]).unwrap_err();
        assert!(matches!(err, Error::RowCountMismatch { rows: 2, records: 3, .. }));
        let err = EmbeddingView::new("w", 2, vec![0.0, 1.0, f32::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }

    #[test]
    fn sensitive_must_be_in_schema() {
        let err = Corpus::new(vec![rec("a", "a")], vec![], schema(), vec!["h".into()]).unwrap_err();
        assert!(matches!(err, Error::UnknownAttribute(_)));
    }

    #[test]
    fn lookup() {
        let c = test_support::tiny(4);
        assert_eq!(c.index_of("img002").unwrap(), 2);
        assert!(c.index_of("nope").is_err());
        assert_eq!(c.view("v").unwrap().row(3), &[3.0, 1.0]);
        assert!(c.view("w").is_err());
        let (names, codes) = c.factor_codes();
        assert_eq!(names, vec!["g"]);
        assert_eq!(codes[1], vec![1]);
    }
}
