//! Exact inner-product retrieval over precomputed document embeddings.

mod provider;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rank::{top_n, ScoredDoc};

pub use provider::{
    EmbeddingProvider, FileLookupProvider, HttpProvider, HttpProviderConfig, MockProvider, ProviderSpec,
    BGE_QUERY_PREFIX,
};

const MAGIC: &[u8; 8] = b"QOQADENS";
pub const FORMAT_VERSION: u32 = 1;

/// Rows scored per parallel task in [`EmbeddingStore::search_with`].
const SCAN_CHUNK: usize = 4096;

/// Inner product of two equal-length vectors, accumulated in `f64`.
pub fn dense_score<T: Copy + Into<f64>>(query: &[T], doc: &[T]) -> Result<f64> {
    if query.len() != doc.len() {
        return Err(Error::DimensionMismatch {
            id: "query".into(),
            found: query.len(),
            expected: doc.len(),
        });
    }
    Ok(dot(query, doc))
}

fn dot<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum()
}

/// Document vectors stored row-major in ascending id order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    doc_ids: Vec<String>,
    rows: Vec<f32>,
    ordinals: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    #[serde(rename = "_id")]
    id: String,
    vector: Vec<f32>,
}

pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    if dim == 0 {
        return Err(Error::InvalidConfig("embedding dimension must be >= 1".into()));
    }
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingLine =
            serde_json::from_str(&line).map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        if rec.id.is_empty() {
            return Err(Error::malformed(path, idx + 1, "empty `_id`"));
        }
        entries.push((rec.id, rec.vector));
    }
    EmbeddingStore::from_vectors(dim, entries)
}

pub fn write_embeddings<'a>(
    path: impl AsRef<Path>,
    entries: impl IntoIterator<Item = (&'a str, &'a [f32])>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (id, vector) in entries {
        let line = serde_json::to_string(&EmbeddingLine {
            id: id.to_string(),
            vector: vector.to_vec(),
        })
        .expect("embedding serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

impl EmbeddingStore {
    pub fn from_vectors(dim: usize, entries: Vec<(String, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be >= 1".into()));
        }
        let mut seen = HashSet::new();
        for (id, v) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: id.clone(),
                    found: v.len(),
                    expected: dim,
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "vector for `{id}` has non-finite components"
                )));
            }
        }
        let mut entries = entries;
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut rows = Vec::with_capacity(entries.len() * dim);
        let mut doc_ids = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            rows.extend_from_slice(&v);
            doc_ids.push(id);
        }
        Ok(Self::assemble(dim, doc_ids, rows))
    }

    fn assemble(dim: usize, doc_ids: Vec<String>, rows: Vec<f32>) -> Self {
        let ordinals = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        EmbeddingStore {
            dim,
            doc_ids,
            rows,
            ordinals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, doc_id: &str) -> Option<&[f32]> {
        self.ordinals.get(doc_id).map(|&o| self.row(o as usize))
    }

    fn row(&self, ordinal: usize) -> &[f32] {
        &self.rows[ordinal * self.dim..(ordinal + 1) * self.dim]
    }

    /// Inner product of `query` with the stored vector of `doc_id`.
    pub fn score(&self, query: &[f32], doc_id: &str) -> Result<Option<f64>> {
        self.check_query(query)?;
        Ok(self.vector(doc_id).map(|v| dot(query, v)))
    }

    fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                id: "query".into(),
                found: query.len(),
                expected: self.dim,
            });
        }
        Ok(())
    }

    pub fn search(&self, query: &[f32], n: usize) -> Result<Vec<ScoredDoc>> {
        self.search_with(query, n, Exec::default())
    }

    /// Exhaustive scan; top-`n` by inner product, ties by ascending id.
    pub fn search_with(&self, query: &[f32], n: usize, exec: Exec) -> Result<Vec<ScoredDoc>> {
        if self.is_empty() {
            return Err(Error::EmptyStore);
        }
        self.check_query(query)?;
        let chunks = self.len().div_ceil(SCAN_CHUNK);
        let per_chunk: Vec<Vec<(u32, f64)>> = exec.map_range(chunks, |c| {
            let start = c * SCAN_CHUNK;
            let end = (start + SCAN_CHUNK).min(self.len());
            let scored = (start..end).map(|o| (o as u32, dot(query, self.row(o)))).collect();
            top_n(scored, n)
        });
        let merged = per_chunk.into_iter().flatten().collect();
        Ok(top_n(merged, n)
            .into_iter()
            .map(|(o, s)| ScoredDoc::new(self.doc_ids[o as usize].clone(), s))
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = artifact::Writer::create(path, MAGIC, FORMAT_VERSION)?;
        w.u32(self.dim as u32)?;
        w.u32(self.len() as u32)?;
        for (o, id) in self.doc_ids.iter().enumerate() {
            w.str(id)?;
            for &x in self.row(o) {
                w.f32(x)?;
            }
        }
        w.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = artifact::Reader::open(path, MAGIC, FORMAT_VERSION)?;
        let dim = r.u32()? as usize;
        let n = r.u32()? as usize;
        if dim == 0 {
            return Err(r.bad("zero dimension"));
        }
        let mut doc_ids = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n * dim);
        for _ in 0..n {
            doc_ids.push(r.str()?);
            for _ in 0..dim {
                rows.push(r.f32()?);
            }
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(r.bad("document table not strictly sorted"));
        }
        r.finish()?;
        Ok(Self::assemble(dim, doc_ids, rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn store(entries: &[(&str, &[f32])]) -> EmbeddingStore {
        let dim = entries[0].1.len();
        EmbeddingStore::from_vectors(
            dim,
            entries.iter().map(|(id, v)| (id.to_string(), v.to_vec())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn inner_products() {
        assert_eq!(dense_score(&[1.0f32, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(dense_score(&[1.0f32, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dense_score(&[0.5f32, 2.0], &[4.0, 0.25]).unwrap(), 2.5);
        assert!(matches!(
            dense_score(&[1.0f32], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn load_single_vector() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"_id\":\"d1\",\"vector\":[0.0,1.0]}}").unwrap();
        let s = load_embeddings(f.path(), 2).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.vector("d1"), Some(&[0.0f32, 1.0][..]));
    }

    #[test]
    fn load_wrong_dimension() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"_id\":\"d1\",\"vector\":[0.0,1.0,2.0]}}").unwrap();
        assert!(matches!(
            load_embeddings(f.path(), 2),
            Err(Error::DimensionMismatch {
                found: 3,
                expected: 2,
                ..
            })
        ));
    }

    #[test]
    fn load_empty_and_duplicate() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(load_embeddings(f.path(), 4).unwrap().is_empty());
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "{{\"_id\":\"d1\",\"vector\":[1.0]}}\n{{\"_id\":\"d1\",\"vector\":[2.0]}}"
        )
        .unwrap();
        assert!(matches!(load_embeddings(f.path(), 1), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn search_two_docs() {
        let s = store(&[("d1", &[1.0, 0.0]), ("d2", &[0.0, 1.0])]);
        let hits = s.search(&[1.0, 0.0], 2).unwrap();
        assert_eq!(hits, vec![ScoredDoc::new("d1", 1.0), ScoredDoc::new("d2", 0.0)]);
        assert_eq!(s.search(&[1.0, 0.0], 10).unwrap().len(), 2);
    }

    #[test]
    fn search_errors() {
        let empty = EmbeddingStore::from_vectors(2, vec![]).unwrap();
        assert!(matches!(empty.search(&[1.0, 0.0], 1), Err(Error::EmptyStore)));
        let s = store(&[("d1", &[1.0, 0.0])]);
        assert!(matches!(s.search(&[1.0], 1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn save_load() {
        let s = store(&[("b", &[0.25, -1.0]), ("a", &[3.0, 0.5])]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dense.bin");
        s.save(&p).unwrap();
        assert_eq!(EmbeddingStore::load(&p).unwrap(), s);
    }

    fn brute_force(entries: &[(String, Vec<f32>)], q: &[f32], n: usize) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = entries
            .iter()
            .map(|(id, v)| (id.clone(), q.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum()))
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(n);
        all
    }

    type Entries = Vec<(String, Vec<f32>)>;

    fn entries_strategy(max_docs: usize) -> impl Strategy<Value = (Entries, Vec<f32>, usize)> {
        (1usize..6).prop_flat_map(move |dim| {
            (
                proptest::collection::vec(proptest::collection::vec(-4i8..=4, dim), 1..max_docs),
                proptest::collection::vec(-4i8..=4, dim),
                1usize..30,
            )
                .prop_map(|(rows, q, n)| {
                    let entries = rows
                        .into_iter()
                        .enumerate()
                        .map(|(i, r)| (format!("d{i:04}"), r.into_iter().map(|x| x as f32 * 0.5).collect()))
                        .collect();
                    (entries, q.into_iter().map(|x| x as f32 * 0.5).collect(), n)
                })
        })
    }

    proptest! {
        // small integer grids force plenty of ties
        #[test]
        fn search_matches_full_sort((entries, q, n) in entries_strategy(1000)) {
            let s = EmbeddingStore::from_vectors(q.len(), entries.clone()).unwrap();
            let got: Vec<(String, f64)> = s.search(&q, n).unwrap().into_iter().map(|d| (d.doc_id, d.score)).collect();
            prop_assert_eq!(&got, &brute_force(&entries, &q, n));
            let seq: Vec<(String, f64)> = s.search_with(&q, n, Exec::Sequential).unwrap().into_iter().map(|d| (d.doc_id, d.score)).collect();
            prop_assert_eq!(got, seq);
        }

        #[test]
        fn score_is_symmetric_and_bilinear(
            x in proptest::collection::vec(-10.0f64..10.0, 8),
            y in proptest::collection::vec(-10.0f64..10.0, 8),
            a in -5.0f64..5.0,
        ) {
            let xy = dense_score(&x, &y).unwrap();
            prop_assert!((xy - dense_score(&y, &x).unwrap()).abs() < 1e-9);
            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            prop_assert!((dense_score(&ax, &y).unwrap() - a * xy).abs() < 1e-9);
        }
    }
}
