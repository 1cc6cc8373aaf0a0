//! Okapi BM25 over an immutable inverted index.
//!
//! Term weights use the plain Robertson–Spärck Jones IDF,
//! `ln((N - n + 0.5) / (n + 0.5))`, which turns negative for terms that occur
//! in more than half of the collection. No `+1` smoothing is applied.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::analyzer::tokenize;
use crate::artifact;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rank::{top_n, ScoredDoc};

const MAGIC: &[u8; 8] = b"QOQASPRS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(Error::InvalidConfig(format!("k1 must be >= 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidConfig(format!("b must be in [0, 1], got {b}")));
        }
        Ok(Bm25Params { k1, b })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    /// Position of the document in the index's id-sorted document table.
    pub doc: u32,
    pub tf: u32,
}

/// Documents are stored in ascending id order, so postings sorted by
/// ordinal are also sorted by document id.
#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    doc_ordinals: HashMap<String, u32>,
    terms: HashMap<String, Vec<Posting>>,
}

pub fn build_index(docs: &[Document]) -> Result<InvertedIndex> {
    build_index_with(docs, Exec::default())
}

pub fn build_index_with(docs: &[Document], exec: Exec) -> Result<InvertedIndex> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_unstable_by(|&a, &b| docs[a].id.cmp(&docs[b].id));
    if let Some(w) = order.windows(2).find(|w| docs[w[0]].id == docs[w[1]].id) {
        return Err(Error::DuplicateId(docs[w[0]].id.clone()));
    }

    // (term counts, length) per document, in id order
    let analyzed: Vec<(BTreeMap<String, u32>, u32)> = exec.map(&order, |&i| {
        let tokens = tokenize(&docs[i].indexable_text());
        let mut counts = BTreeMap::new();
        for t in tokens.iter() {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        (counts, tokens.len() as u32)
    });

    let mut terms: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_lengths = Vec::with_capacity(docs.len());
    for (ordinal, (counts, len)) in analyzed.into_iter().enumerate() {
        doc_lengths.push(len);
        for (term, tf) in counts {
            terms.entry(term).or_default().push(Posting {
                doc: ordinal as u32,
                tf,
            });
        }
    }
    let doc_ids = order.iter().map(|&i| docs[i].id.clone()).collect();
    Ok(InvertedIndex::assemble(doc_ids, doc_lengths, terms))
}

impl InvertedIndex {
    fn assemble(doc_ids: Vec<String>, doc_lengths: Vec<u32>, terms: HashMap<String, Vec<Posting>>) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            total as f64 / doc_lengths.len() as f64
        };
        let doc_ordinals = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        InvertedIndex {
            doc_ids,
            doc_lengths,
            avg_doc_length,
            doc_ordinals,
            terms,
        }
    }

    pub fn total_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    /// Document ids in ascending order.
    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.doc_ordinals.contains_key(doc_id)
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc_ordinals.get(doc_id).map(|&o| self.doc_lengths[o as usize])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.terms.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        let Some(&ordinal) = self.doc_ordinals.get(doc_id) else {
            return 0;
        };
        self.tf_at(term, ordinal)
    }

    fn tf_at(&self, term: &str, ordinal: u32) -> u32 {
        let postings = self.postings(term);
        postings
            .binary_search_by_key(&ordinal, |p| p.doc)
            .map(|i| postings[i].tf)
            .unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term) as f64;
        let total = self.total_docs() as f64;
        ((total - n + 0.5) / (n + 0.5)).ln()
    }

    fn term_weight(&self, params: Bm25Params, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - params.b + params.b * doc_len as f64 / self.avg_doc_length;
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    pub fn bm25_score(&self, params: Bm25Params, query_terms: &[String], doc_id: &str) -> Result<f64> {
        let &ordinal = self
            .doc_ordinals
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        let doc_len = self.doc_lengths[ordinal as usize];
        let mut score = 0.0;
        for term in distinct(query_terms) {
            let tf = self.tf_at(term, ordinal);
            if tf > 0 {
                score += self.term_weight(params, self.idf(term), tf, doc_len);
            }
        }
        Ok(score)
    }

    /// All documents sharing a term with the query, with their scores.
    /// Accumulation follows query-term order, matching [`Self::bm25_score`].
    fn score_candidates(&self, params: Bm25Params, query_terms: &[String]) -> Vec<(u32, f64)> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in distinct(query_terms) {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in postings {
                let w = self.term_weight(params, idf, p.tf, self.doc_lengths[p.doc as usize]);
                *acc.entry(p.doc).or_insert(0.0) += w;
            }
        }
        acc.into_iter().collect()
    }

    pub fn search_terms(&self, params: Bm25Params, query_terms: &[String], n: usize) -> Result<Vec<ScoredDoc>> {
        if self.doc_ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let candidates: Vec<(u32, f64)> = self
            .score_candidates(params, query_terms)
            .into_iter()
            .filter(|&(_, s)| s != 0.0)
            .collect();
        Ok(top_n(candidates, n)
            .into_iter()
            .map(|(o, s)| ScoredDoc::new(self.doc_id(o), s))
            .collect())
    }

    /// Top-`n` documents by BM25, ties by ascending id; zero scores omitted.
    pub fn search(&self, params: Bm25Params, query: &str, n: usize) -> Result<Vec<ScoredDoc>> {
        self.search_terms(params, &tokenize(query), n)
    }

    pub fn batch_search(
        &self,
        params: Bm25Params,
        queries: &[String],
        n: usize,
        exec: Exec,
    ) -> Result<Vec<Vec<ScoredDoc>>> {
        exec.map(queries, |q| self.search(params, q, n)).into_iter().collect()
    }

    /// Byte-identical output for identical indexes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = artifact::Writer::create(path, MAGIC, FORMAT_VERSION)?;
        w.u32(self.doc_ids.len() as u32)?;
        for (id, &len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            w.str(id)?;
            w.u32(len)?;
        }
        let mut terms: Vec<&String> = self.terms.keys().collect();
        terms.sort_unstable();
        w.u32(terms.len() as u32)?;
        for term in terms {
            let postings = &self.terms[term];
            w.str(term)?;
            w.u32(postings.len() as u32)?;
            for p in postings {
                w.u32(p.doc)?;
                w.u32(p.tf)?;
            }
        }
        w.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = artifact::Reader::open(path, MAGIC, FORMAT_VERSION)?;
        let n_docs = r.u32()? as usize;
        let mut doc_ids = Vec::with_capacity(n_docs);
        let mut doc_lengths = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_ids.push(r.str()?);
            doc_lengths.push(r.u32()?);
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(r.bad("document table not strictly sorted"));
        }
        let n_terms = r.u32()? as usize;
        let mut terms = HashMap::with_capacity(n_terms);
        for _ in 0..n_terms {
            let term = r.str()?;
            let len = r.u32()? as usize;
            let mut postings = Vec::with_capacity(len);
            for _ in 0..len {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= n_docs || postings.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(r.bad(format!("bad postings for term `{term}`")));
                }
                postings.push(Posting { doc, tf });
            }
            terms.insert(term, postings);
        }
        r.finish()?;
        Ok(InvertedIndex::assemble(doc_ids, doc_lengths, terms))
    }
}

fn distinct(terms: &[String]) -> impl Iterator<Item = &String> {
    let mut seen = HashSet::new();
    terms.iter().filter(move |t| seen.insert(t.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[(&str, &str)]) -> Vec<Document> {
        texts.iter().map(|(id, t)| Document::new(*id, "", *t)).collect()
    }

    fn terms(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn counts_two_docs() {
        let idx = build_index(&corpus(&[("d1", "cat sat"), ("d2", "cat")])).unwrap();
        assert_eq!(idx.total_docs(), 2);
        assert_eq!(idx.doc_freq("cat"), 2);
        assert_eq!(idx.doc_freq("sat"), 1);
        assert_eq!(idx.avg_doc_length(), 1.5);
    }

    #[test]
    fn repeated_term() {
        let idx = build_index(&corpus(&[("d1", "cat cat cat")])).unwrap();
        assert_eq!(idx.postings("cat"), &[Posting { doc: 0, tf: 3 }]);
        assert_eq!(idx.avg_doc_length(), 3.0);
    }

    #[test]
    fn empty_collection() {
        assert!(matches!(build_index(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let docs = corpus(&[("d1", "a"), ("d1", "b")]);
        assert!(matches!(build_index(&docs), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn title_is_indexed() {
        let idx = build_index(&[Document::new("d1", "Zebra", "cat")]).unwrap();
        assert_eq!(idx.doc_freq("zebra"), 1);
        assert_eq!(idx.doc_length("d1"), Some(2));
    }

    #[test]
    fn idf_values() {
        let idx = build_index(&corpus(&[("d1", "cat sat"), ("d2", "dog ran"), ("d3", "cat dog")])).unwrap();
        assert!((idx.idf("cat") - (-0.5108256237659907)).abs() < 1e-12);
        assert!((idx.idf("unseen") - 1.945910149055313).abs() < 1e-12);
        let two = build_index(&corpus(&[("d1", "cat"), ("d2", "dog")])).unwrap();
        assert_eq!(two.idf("cat"), 0.0);
    }

    #[test]
    fn no_shared_terms_scores_zero() {
        let idx = build_index(&corpus(&[("d1", "cat sat"), ("d2", "dog ran")])).unwrap();
        let s = idx.bm25_score(Bm25Params::default(), &terms(&["bird"]), "d1").unwrap();
        assert_eq!(s, 0.0);
        assert!(idx.search(Bm25Params::default(), "bird", 5).unwrap().is_empty());
    }

    #[test]
    fn unknown_document() {
        let idx = build_index(&corpus(&[("d1", "cat")])).unwrap();
        let r = idx.bm25_score(Bm25Params::default(), &terms(&["cat"]), "zzz");
        assert!(matches!(r, Err(Error::UnknownDocument(id)) if id == "zzz"));
    }

    #[test]
    fn duplicate_query_terms_count_once() {
        let idx = build_index(&corpus(&[("d1", "cat sat"), ("d2", "dog ran"), ("d3", "bird")])).unwrap();
        let p = Bm25Params::default();
        let once = idx.bm25_score(p, &terms(&["cat"]), "d1").unwrap();
        let twice = idx.bm25_score(p, &terms(&["cat", "cat"]), "d1").unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn params_validated() {
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert_eq!(Bm25Params::new(1.2, 0.75).unwrap(), Bm25Params::default());
    }

    #[test]
    fn save_load_round_trip_and_stable_bytes() {
        let docs = corpus(&[("d2", "dog ran fast"), ("d1", "cat sat"), ("d3", "cat dog")]);
        let idx = build_index(&docs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.idx"), dir.path().join("b.idx"));
        idx.save(&a).unwrap();
        build_index(&docs).unwrap().save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(InvertedIndex::load(&a).unwrap(), idx);
    }

    #[test]
    fn load_rejects_garbage() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), b"not an index").unwrap();
        assert!(matches!(InvertedIndex::load(f.path()), Err(Error::BadArtifact { .. })));
    }

    #[test]
    fn sequential_and_default_builds_match() {
        let docs: Vec<Document> = (0..200)
            .map(|i| Document::new(format!("doc{i:03}"), "", format!("term{} term{} shared", i % 7, i % 13)))
            .collect();
        assert_eq!(
            build_index_with(&docs, Exec::Sequential).unwrap(),
            build_index_with(&docs, Exec::default()).unwrap()
        );
    }
}
