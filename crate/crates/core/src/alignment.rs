//! Query–document alignment: how well a query "fits" the documents it
//! retrieves, measured as the mean score of its top-`n` documents under a
//! BM25, dense or hybrid scorer. Also holds the query bucket, the ledger of
//! scored rephrasings that drives optimization.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analyzer::tokenize;
use crate::dense::{EmbeddingProvider, EmbeddingStore};
use crate::error::{Error, Result};
use crate::rank::{top_n, ScoredDoc};
use crate::sparse::{Bm25Params, InvertedIndex};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlignmentMode {
    Bm25,
    Dense,
    /// `alpha * bm25 + dense`, per document.
    Hybrid {
        alpha: f64,
    },
}

impl AlignmentMode {
    pub fn hybrid(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be finite, got {alpha}")));
        }
        Ok(AlignmentMode::Hybrid { alpha })
    }

    pub fn needs_sparse(&self) -> bool {
        matches!(self, AlignmentMode::Bm25 | AlignmentMode::Hybrid { .. })
    }

    pub fn needs_dense(&self) -> bool {
        matches!(self, AlignmentMode::Dense | AlignmentMode::Hybrid { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlignmentMode::Bm25 => "bm25",
            AlignmentMode::Dense => "dense",
            AlignmentMode::Hybrid { .. } => "hybrid",
        }
    }
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlignmentMode::Hybrid { alpha } => write!(f, "hybrid(alpha={alpha})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `bm25`, `dense` or `hybrid` (with the default alpha).
impl FromStr for AlignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bm25" | "sparse" => Ok(AlignmentMode::Bm25),
            "dense" => Ok(AlignmentMode::Dense),
            "hybrid" => Ok(AlignmentMode::Hybrid { alpha: DEFAULT_ALPHA }),
            other => Err(Error::InvalidConfig(format!("unknown score mode `{other}`"))),
        }
    }
}

pub fn hybrid_score(bm25: f64, dense: f64, alpha: f64) -> f64 {
    alpha * bm25 + dense
}

/// Retrieval backends, borrowed for the duration of a scoring call.
#[derive(Clone, Copy, Default)]
pub struct Backends<'a> {
    pub sparse: Option<&'a InvertedIndex>,
    pub bm25: Bm25Params,
    pub dense: Option<&'a EmbeddingStore>,
    pub provider: Option<&'a dyn EmbeddingProvider>,
}

impl<'a> Backends<'a> {
    pub fn sparse(index: &'a InvertedIndex, bm25: Bm25Params) -> Self {
        Backends {
            sparse: Some(index),
            bm25,
            ..Default::default()
        }
    }

    pub fn dense(store: &'a EmbeddingStore, provider: &'a dyn EmbeddingProvider) -> Self {
        Backends {
            dense: Some(store),
            provider: Some(provider),
            ..Default::default()
        }
    }

    pub fn with_dense(mut self, store: &'a EmbeddingStore, provider: &'a dyn EmbeddingProvider) -> Self {
        self.dense = Some(store);
        self.provider = Some(provider);
        self
    }

    pub fn check(&self, mode: AlignmentMode) -> Result<()> {
        if mode.needs_sparse() && self.sparse.is_none() {
            return Err(Error::InvalidConfig(format!("{mode} scoring needs a sparse index")));
        }
        if mode.needs_dense() {
            let (Some(store), Some(provider)) = (self.dense, self.provider) else {
                return Err(Error::InvalidConfig(format!(
                    "{mode} scoring needs document embeddings and a query embedding provider"
                )));
            };
            if store.dim() != provider.dim() {
                return Err(Error::DimensionMismatch {
                    id: "embedding provider".into(),
                    found: provider.dim(),
                    expected: store.dim(),
                });
            }
        }
        Ok(())
    }

    fn require_sparse(&self) -> Result<&'a InvertedIndex> {
        self.sparse
            .ok_or_else(|| Error::InvalidConfig("sparse index required".into()))
    }

    fn require_dense(&self) -> Result<(&'a EmbeddingStore, &'a dyn EmbeddingProvider)> {
        self.dense
            .zip(self.provider)
            .ok_or_else(|| Error::InvalidConfig("dense store and provider required".into()))
    }
}

/// Top-`n` documents for `query` with their per-document scores under `mode`.
///
/// Hybrid mode pools the sparse and dense top-`n` lists, re-scores every
/// pooled document as `alpha * bm25 + dense` (a side with no entry for the
/// document contributes 0) and keeps the best `n`.
pub fn retrieve(query: &str, mode: AlignmentMode, n: usize, backends: &Backends<'_>) -> Result<Vec<ScoredDoc>> {
    if n == 0 {
        return Err(Error::InvalidConfig("retrieval depth must be >= 1".into()));
    }
    match mode {
        AlignmentMode::Bm25 => backends.require_sparse()?.search(backends.bm25, query, n),
        AlignmentMode::Dense => {
            let (store, provider) = backends.require_dense()?;
            store.search(&provider.embed_query(query)?, n)
        }
        AlignmentMode::Hybrid { alpha } => {
            let index = backends.require_sparse()?;
            let (store, provider) = backends.require_dense()?;
            let terms = tokenize(query);
            let q_vec = provider.embed_query(query)?;
            let pool: BTreeSet<String> = index
                .search_terms(backends.bm25, &terms, n)?
                .into_iter()
                .chain(store.search(&q_vec, n)?)
                .map(|d| d.doc_id)
                .collect();
            let mut scored = Vec::with_capacity(pool.len());
            for doc_id in pool {
                let bm25 = if index.contains(&doc_id) {
                    index.bm25_score(backends.bm25, &terms, &doc_id)?
                } else {
                    0.0
                };
                let dense = store.score(&q_vec, &doc_id)?.unwrap_or(0.0);
                scored.push((doc_id, hybrid_score(bm25, dense, alpha)));
            }
            Ok(top_n(scored, n)
                .into_iter()
                .map(|(id, s)| ScoredDoc::new(id, s))
                .collect())
        }
    }
}

/// Mean per-document score over the query's top-`n` documents; 0 when
/// nothing is retrieved.
pub fn alignment_score(query: &str, mode: AlignmentMode, n: usize, backends: &Backends<'_>) -> Result<f64> {
    let docs = retrieve(query, mode, n, backends)?;
    Ok(mean_score(&docs))
}

pub fn mean_score(docs: &[ScoredDoc]) -> f64 {
    if docs.is_empty() {
        0.0
    } else {
        docs.iter().map(|d| d.score).sum::<f64>() / docs.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryBucketEntry {
    pub text: String,
    pub score: f64,
    /// 0 for the original query and the initial batch of rephrasings.
    pub iteration: u32,
}

impl QueryBucketEntry {
    pub fn new(text: impl Into<String>, score: f64, iteration: u32) -> Self {
        QueryBucketEntry {
            text: text.into(),
            score,
            iteration,
        }
    }
}

/// Higher score first, then earlier iteration, then text.
fn rank_order(a: &QueryBucketEntry, b: &QueryBucketEntry) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.iteration.cmp(&b.iteration))
        .then_with(|| a.text.cmp(&b.text))
}

/// Scored queries in insertion order, unique by text. The first entry is
/// always the original query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryBucket {
    entries: Vec<QueryBucketEntry>,
}

impl QueryBucket {
    pub fn new(original: QueryBucketEntry) -> Self {
        QueryBucket {
            entries: vec![original],
        }
    }

    pub fn original(&self) -> &QueryBucketEntry {
        &self.entries[0]
    }

    pub fn entries(&self) -> &[QueryBucketEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, text: &str) -> bool {
        self.entries.iter().any(|e| e.text == text)
    }

    /// Appends `entry` unless its text is already present or its score is
    /// not finite. Returns whether it was added.
    pub fn insert(&mut self, entry: QueryBucketEntry) -> bool {
        if !entry.score.is_finite() {
            log::warn!("dropping non-finite score for {:?}", entry.text);
            return false;
        }
        if self.contains(&entry.text) {
            return false;
        }
        self.entries.push(entry);
        true
    }

    pub fn best(&self) -> &QueryBucketEntry {
        self.entries
            .iter()
            .min_by(|a, b| rank_order(a, b))
            .expect("bucket always holds the original")
    }

    pub fn top_k(&self, k: usize) -> Vec<QueryBucketEntry> {
        let mut sorted: Vec<&QueryBucketEntry> = self.entries.iter().collect();
        sorted.sort_by(|a, b| rank_order(a, b));
        sorted.into_iter().take(k).cloned().collect()
    }

    /// Maximum score seen after each insertion, in insertion order.
    pub fn running_max(&self) -> Vec<f64> {
        self.entries
            .iter()
            .scan(f64::NEG_INFINITY, |best, e| {
                *best = best.max(e.score);
                Some(*best)
            })
            .collect()
    }

    /// One JSON object per line: `{"text", "score", "iteration"}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> std::io::Result<Self> {
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str::<QueryBucketEntry>(&line)?);
        }
        let mut it = entries.into_iter();
        let original = it
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "empty bucket trace"))?;
        let mut bucket = QueryBucket::new(original);
        for e in it {
            bucket.insert(e);
        }
        Ok(bucket)
    }
}
