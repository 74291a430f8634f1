//! Loading embedding matrices and factor tables for the `metrics` subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context};
use relfeed::corpus::{read_embedding_file, Corpus, ImageRecord};
use relfeed::metrics::Attribute;

/// Rows of an embedding matrix: a `.csv` of numbers (an optional header row is
/// skipped), or the binary matrix format used inside corpus directories.
pub fn read_embeddings(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        let (rows, dim, data, _) = read_embedding_file(path)?;
        return Ok((0..rows)
            .map(|i| data[i * dim..(i + 1) * dim].iter().map(|&x| x as f64).collect())
            .collect());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), line + 1))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = out.first() {
                    if first.len() != row.len() {
                        bail!("{}: row {} has {} values, expected {}", path.display(), line + 1, row.len(), first.len());
                    }
                }
                out.push(row);
            }
            Err(_) if line == 0 => {}
            Err(e) => bail!("{}: row {}: {e}", path.display(), line + 1),
        }
    }
    if out.is_empty() {
        bail!("{}: no embedding rows", path.display());
    }
    Ok(out)
}

/// A categorical table with a header row. A column named `id` names the rows;
/// otherwise rows are named by their zero-based position.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    /// `values[row][col]`.
    pub values: Vec<Vec<String>>,
}

impl FactorTable {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let id_col = header.iter().position(|h| h == "id");
        let columns: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != id_col)
            .map(|(_, h)| h.clone())
            .collect();
        if columns.is_empty() {
            bail!("{}: no factor columns", path.display());
        }
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.with_context(|| format!("{}: row {}", path.display(), row + 2))?;
            ids.push(match id_col {
                Some(c) => rec[c].trim().to_string(),
                None => row.to_string(),
            });
            values.push(
                rec.iter()
                    .enumerate()
                    .filter(|(i, _)| Some(*i) != id_col)
                    .map(|(_, v)| v.trim().to_string())
                    .collect(),
            );
        }
        Ok(Self { ids, columns, values })
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let columns: Vec<String> = corpus.schema().keys().cloned().collect();
        Self {
            ids: corpus.records().iter().map(|r| r.id.clone()).collect(),
            values: corpus
                .records()
                .iter()
                .map(|r| columns.iter().map(|c| r.attributes[c].clone()).collect())
                .collect(),
            columns,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn classes(&self, col: usize) -> Vec<String> {
        let set: BTreeSet<&String> = self.values.iter().map(|r| &r[col]).collect();
        set.into_iter().cloned().collect()
    }

    /// Each column coded by the sorted position of its value.
    pub fn attributes(&self) -> Vec<Attribute> {
        (0..self.columns.len())
            .map(|c| {
                let classes = self.classes(c);
                Attribute {
                    name: self.columns[c].clone(),
                    codes: self
                        .values
                        .iter()
                        .map(|r| classes.binary_search(&r[c]).expect("value is in its own class list"))
                        .collect(),
                }
            })
            .collect()
    }

    /// Factor codes as a numeric matrix, one row per sample.
    pub fn code_matrix(&self) -> Vec<Vec<f64>> {
        let attrs = self.attributes();
        (0..self.len())
            .map(|i| attrs.iter().map(|a| a.codes[i] as f64).collect())
            .collect()
    }

    /// A view-less corpus over this table, enough for attribute distributions.
    pub fn to_corpus(&self) -> anyhow::Result<Corpus> {
        let schema: BTreeMap<String, Vec<String>> = (0..self.columns.len())
            .map(|c| (self.columns[c].clone(), self.classes(c)))
            .collect();
        let records = self
            .ids
            .iter()
            .zip(&self.values)
            .map(|(id, row)| ImageRecord {
                id: id.clone(),
                attributes: self.columns.iter().cloned().zip(row.iter().cloned()).collect(),
                image_uri: None,
            })
            .collect();
        Ok(Corpus::new(records, Vec::new(), schema, Vec::new())?)
    }
}
