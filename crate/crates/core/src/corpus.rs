//! BEIR-format dataset ingest: `corpus.jsonl`, `queries.jsonl` and qrels TSV.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "_id")]
    pub id: String,
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// Text fed to the analyzer when indexing: title, a space, then body.
    pub fn indexable_text(&self) -> String {
        format!("{} {}", self.title, self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    #[serde(rename = "_id")]
    pub id: String,
    pub text: String,
}

impl QueryRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        QueryRecord {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Documents with lookup by id.
#[derive(Clone, Debug, Default)]
pub struct Collection {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Collection {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Collection { docs, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Graded relevance judgments, query id -> doc id -> grade.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous grade for the pair, if any.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.judgments.iter().map(|(q, d)| (q.as_str(), d))
    }

    /// Number of (query, doc) judgments.
    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Parses non-blank JSONL lines into `T`, reporting 1-based line numbers.
fn read_jsonl<T, F>(path: &Path, mut check: F) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(&T) -> std::result::Result<(), String>,
{
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        check(&record).map_err(|reason| Error::malformed(path, idx + 1, reason))?;
        out.push(record);
    }
    Ok(out)
}

fn ensure_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path.as_ref(), |d: &Document| {
        if d.id.is_empty() {
            Err("empty `_id`".into())
        } else {
            Ok(())
        }
    })?;
    ensure_unique(docs.iter().map(|d| d.id.as_str()))?;
    Ok(docs)
}

pub fn parse_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let queries: Vec<QueryRecord> = read_jsonl(path.as_ref(), |q: &QueryRecord| {
        if q.id.is_empty() {
            Err("empty `_id`".into())
        } else if q.text.trim().is_empty() {
            Err(format!("query `{}` has empty text", q.id))
        } else {
            Ok(())
        }
    })?;
    ensure_unique(queries.iter().map(|q| q.id.as_str()))?;
    Ok(queries)
}

/// Reads a `query-id<TAB>corpus-id<TAB>score` file. A leading header row is
/// skipped. When a pair repeats, the later grade wins.
pub fn parse_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let mut qrels = Qrels::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || (idx == 0 && line.starts_with("query-id")) {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let [query_id, doc_id, grade] = fields[..] else {
            return Err(Error::malformed(
                path,
                idx + 1,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        let grade: u32 = grade
            .parse()
            .map_err(|_| Error::malformed(path, idx + 1, format!("grade `{grade}` is not a non-negative integer")))?;
        if let Some(previous) = qrels.insert(query_id, doc_id, grade) {
            log::warn!(
                "{}:{}: duplicate judgment ({query_id}, {doc_id}); {previous} replaced by {grade}",
                path.display(),
                idx + 1
            );
        }
    }
    Ok(qrels)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_jsonl(path.as_ref(), docs)
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[QueryRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), queries)
}

pub fn write_qrels(path: impl AsRef<Path>, qrels: &Qrels) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "query-id\tcorpus-id\tscore").map_err(io)?;
    for (query_id, docs) in qrels.iter() {
        for (doc_id, grade) in docs {
            writeln!(out, "{query_id}\t{doc_id}\t{grade}").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
