//! On-disk corpus layout: a JSON manifest plus one binary matrix per view.
//!
//! Matrix file: `b"FCPE"`, `u32` version (1), `u64` rows, `u64` dim, then
//! `rows * dim` little-endian `f32` values, row-major.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Corpus, EmbeddingView, ImageRecord};
use crate::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"FCPE";
const EMBEDDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub const MANIFEST_NAME: &str = "manifest.json";

pub type ManifestRecord = ImageRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestView {
    pub name: String,
    pub dim: usize,
    /// Path relative to the manifest's directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Attribute name to allowed values. Inferred from the records when absent.
    #[serde(default)]
    pub schema: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub sensitive_attributes: Vec<String>,
    pub records: Vec<ManifestRecord>,
    pub views: Vec<ManifestView>,
}

fn encode_view(view: &EmbeddingView) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + view.data().len() * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    buf.extend_from_slice(&(view.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(view.dim() as u64).to_le_bytes());
    for x in view.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

/// Write one view's matrix file. Returns the hex sha256 of the bytes written.
pub fn write_embedding_file(path: &Path, view: &EmbeddingView) -> Result<String> {
    let bytes = encode_view(view);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Read a matrix file as `(rows, dim, values, sha256)`.
pub fn read_embedding_file(path: &Path) -> Result<(usize, usize, Vec<f32>, String)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::BadEmbeddingFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(bad("missing FCPE header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("size overflow".into()))?;
    if bytes.len() - HEADER_LEN != expected {
        return Err(bad(format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len() - HEADER_LEN
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, dim, values, hex::encode(Sha256::digest(&bytes))))
}

/// Write `manifest.json` and one `<view>.fcpe` per view into `dir`.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut views = Vec::with_capacity(corpus.views().len());
    for v in corpus.views() {
        let file = format!("{}.fcpe", v.name());
        let sha256 = write_embedding_file(&dir.join(&file), v)?;
        views.push(ManifestView {
            name: v.name().to_string(),
            dim: v.dim(),
            file,
            sha256,
        });
    }
    let manifest = Manifest {
        schema: corpus.schema().clone(),
        sensitive_attributes: corpus.sensitive_attributes().to_vec(),
        records: corpus.records().to_vec(),
        views,
    };
    let path = dir.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Load a corpus from a manifest path, or from a directory containing `manifest.json`.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_NAME)
    } else {
        manifest_path.to_path_buf()
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut schema = manifest.schema;
    if schema.is_empty() {
        for r in &manifest.records {
            for (k, v) in &r.attributes {
                let vals = schema.entry(k.clone()).or_default();
                if !vals.contains(v) {
                    vals.push(v.clone());
                }
            }
        }
        schema.values_mut().for_each(|v| v.sort());
    }

    let mut views = Vec::with_capacity(manifest.views.len());
    for mv in &manifest.views {
        let file = base.join(&mv.file);
        let (rows, dim, data, sha) = read_embedding_file(&file)?;
        if dim != mv.dim {
            return Err(Error::BadEmbeddingFile {
                path: file,
                reason: format!("dim {dim} but manifest says {}", mv.dim),
            });
        }
        if !mv.sha256.is_empty() && !mv.sha256.eq_ignore_ascii_case(&sha) {
            return Err(Error::BadEmbeddingFile {
                path: file,
                reason: "sha256 mismatch".into(),
            });
        }
        if rows != manifest.records.len() {
            return Err(Error::RowCountMismatch {
                view: mv.name.clone(),
                rows,
                records: manifest.records.len(),
            });
        }
        views.push(EmbeddingView::new(mv.name.clone(), dim, data)?);
    }
    Corpus::new(manifest.records, views, schema, manifest.sensitive_attributes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::tiny;

    #[test]
    fn one_value_payload_is_four_bytes() {
        let rec = ImageRecord {
            id: "a".into(),
            attributes: BTreeMap::new(),
            image_uri: None,
        };
        let c = Corpus::new(
            vec![rec],
            vec![EmbeddingView::new("v", 1, vec![0.5]).unwrap()],
            BTreeMap::new(),
            vec![],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&c, dir.path()).unwrap();
        let bytes = fs::read(dir.path().join("v.fcpe")).unwrap();
        assert_eq!(&bytes[..4], b"FCPE");
        assert_eq!(&bytes[HEADER_LEN..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn empty_views_write_no_matrix_files() {
        let rec = ImageRecord {
            id: "a".into(),
            attributes: BTreeMap::new(),
            image_uri: Some("a.png".into()),
        };
        let c = Corpus::new(vec![rec], vec![], BTreeMap::new(), vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&c, dir.path()).unwrap();
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        assert_eq!(load_corpus(dir.path()).unwrap(), c);
    }

    #[test]
    fn short_view_file_is_row_mismatch() {
        let c = tiny(3);
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&c, dir.path()).unwrap();
        let short = EmbeddingView::new("v", 2, vec![0.0; 4]).unwrap();
        let sha = write_embedding_file(&dir.path().join("v.fcpe"), &short).unwrap();
        let mpath = dir.path().join(MANIFEST_NAME);
        let mut m: Manifest = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        m.views[0].sha256 = sha;
        fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(
            load_corpus(&mpath),
            Err(Error::RowCountMismatch { rows: 2, records: 3, .. })
        ));
    }

    #[test]
    fn corrupted_file_fails_checksum() {
        let c = tiny(3);
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&c, dir.path()).unwrap();
        let p = dir.path().join("v.fcpe");
        let mut bytes = fs::read(&p).unwrap();
        *bytes.last_mut().unwrap() ^= 1;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(Error::BadEmbeddingFile { .. })));
    }

    #[test]
    fn schema_inferred_when_missing() {
        let c = tiny(4);
        let dir = tempfile::tempdir().unwrap();
        let mpath = save_corpus(&c, dir.path()).unwrap();
        let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        m.as_object_mut().unwrap().remove("schema");
        m.as_object_mut().unwrap().remove("sensitive_attributes");
        fs::write(&mpath, m.to_string()).unwrap();
        let back = load_corpus(&mpath).unwrap();
        assert_eq!(back.schema(), c.schema());
    }
}
