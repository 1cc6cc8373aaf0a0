//! Reference implementations used as test oracles. They work on plain token
//! lists and never touch the inverted index.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;

use qoqa_core::analyzer::tokenize;
use qoqa_core::corpus::{Document, Qrels};
use qoqa_core::rank::ScoredDoc;

/// Tokens the analyzer passes through unchanged, so corpora built from them
/// can be scored by splitting on whitespace.
pub fn vocabulary(size: usize) -> Vec<String> {
    let words: Vec<String> = (0..size).map(|i| format!("t{i}")).collect();
    for w in &words {
        assert_eq!(tokenize(w).into_terms(), vec![w.clone()], "analyzer changed {w}");
    }
    words
}

#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub docs: Vec<Document>,
    pub tokens: Vec<Vec<String>>,
}

impl ToyCorpus {
    pub fn from_tokens(tokens: Vec<Vec<String>>) -> ToyCorpus {
        let docs = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i:03}"), "", t.join(" ")))
            .collect();
        ToyCorpus { docs, tokens }
    }

    pub fn random<R: Rng>(rng: &mut R, vocab: &[String], max_docs: usize, max_len: usize) -> ToyCorpus {
        let n_docs = rng.random_range(1..=max_docs);
        let tokens = (0..n_docs)
            .map(|_| {
                let len = rng.random_range(1..=max_len);
                (0..len).map(|_| vocab.choose(rng).unwrap().clone()).collect()
            })
            .collect();
        ToyCorpus::from_tokens(tokens)
    }
}

pub fn random_query<R: Rng>(rng: &mut R, vocab: &[String], max_terms: usize) -> Vec<String> {
    let len = rng.random_range(1..=max_terms);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.1) {
                "oov".to_string()
            } else {
                vocab.choose(rng).unwrap().clone()
            }
        })
        .collect()
}

/// Okapi BM25 of every document, straight from the formulas: natural-log
/// IDF `ln((N - n + 0.5) / (n + 0.5))`, each distinct query term counted once.
pub fn bm25_all(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n_docs = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n_docs;
    let mut seen = HashSet::new();
    let terms: Vec<&String> = query.iter().filter(|t| seen.insert(*t)).collect();
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for t in &terms {
                let f = doc.iter().filter(|w| w == t).count() as f64;
                if f == 0.0 {
                    continue;
                }
                let n = docs.iter().filter(|d| d.contains(t)).count() as f64;
                let idf = ((n_docs - n + 0.5) / (n + 0.5)).ln();
                score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * doc.len() as f64 / avgdl));
            }
            score
        })
        .collect()
}

/// Full ranking: documents sharing a term with the query and scoring
/// non-zero, by score descending then id ascending.
pub fn bm25_ranking(corpus: &ToyCorpus, query: &[String], k1: f64, b: f64) -> Vec<(String, f64)> {
    let scores = bm25_all(&corpus.tokens, query, k1, b);
    let mut ranked: Vec<(String, f64)> = corpus
        .docs
        .iter()
        .zip(&corpus.tokens)
        .zip(scores)
        .filter(|((_, toks), s)| *s != 0.0 && query.iter().any(|q| toks.contains(q)))
        .map(|((d, _), s)| (d.id.clone(), s))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Checks `got` against the top of `oracle`: same length, scores within
/// `tol` position by position, and any id mismatch only between documents
/// whose oracle scores are within `tol` (a float-level tie).
pub fn compare_ranking(got: &[ScoredDoc], oracle: &[(String, f64)], n: usize, tol: f64) -> Result<f64, String> {
    let want = &oracle[..oracle.len().min(n)];
    if got.len() != want.len() {
        return Err(format!("length {} vs oracle {}", got.len(), want.len()));
    }
    let lookup: BTreeMap<&str, f64> = oracle.iter().map(|(d, s)| (d.as_str(), *s)).collect();
    let mut worst: f64 = 0.0;
    for (i, (g, (wid, ws))) in got.iter().zip(want).enumerate() {
        let Some(&own) = lookup.get(g.doc_id.as_str()) else {
            return Err(format!("rank {}: {} not in oracle ranking", i + 1, g.doc_id));
        };
        let diff = (g.score - own).abs().max((g.score - ws).abs());
        worst = worst.max(diff);
        if diff > tol {
            return Err(format!(
                "rank {}: {} scored {} vs oracle {} ({} expected)",
                i + 1,
                g.doc_id,
                g.score,
                own,
                wid
            ));
        }
        if &g.doc_id != wid && (own - ws).abs() > tol {
            return Err(format!("rank {}: {} instead of {}", i + 1, g.doc_id, wid));
        }
    }
    Ok(worst)
}

/// Mean of the top-`n` oracle scores; 0 when nothing matches.
pub fn bm25_alignment(corpus: &ToyCorpus, query: &[String], n: usize, k1: f64, b: f64) -> f64 {
    let ranked = bm25_ranking(corpus, query, k1, b);
    let top = &ranked[..ranked.len().min(n)];
    if top.is_empty() {
        0.0
    } else {
        top.iter().map(|(_, s)| s).sum::<f64>() / top.len() as f64
    }
}

pub fn split(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// One synthetic evaluation case with per-query values from a trec_eval
/// based evaluator.
pub struct NdcgCase {
    pub qrels: Qrels,
    pub run: BTreeMap<String, Vec<ScoredDoc>>,
    pub exponential: BTreeMap<String, f64>,
    pub mean_exponential: f64,
    pub linear: BTreeMap<String, f64>,
    pub mean_linear: f64,
}

pub fn ndcg_cases() -> Vec<NdcgCase> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ndcg_cases.json");
    let raw: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let map = |v: &serde_json::Value| -> BTreeMap<String, f64> {
        v.as_object()
            .unwrap()
            .iter()
            .map(|(k, x)| (k.clone(), x.as_f64().unwrap()))
            .collect()
    };
    raw.iter()
        .map(|c| {
            let mut qrels = Qrels::new();
            for (q, docs) in c["qrels"].as_object().unwrap() {
                for (d, g) in docs.as_object().unwrap() {
                    qrels.insert(q, d, g.as_u64().unwrap() as u32);
                }
            }
            let run = c["run"]
                .as_object()
                .unwrap()
                .iter()
                .map(|(q, rows)| {
                    let docs = rows
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|r| ScoredDoc::new(r[0].as_str().unwrap(), r[1].as_f64().unwrap()))
                        .collect();
                    (q.clone(), docs)
                })
                .collect();
            NdcgCase {
                qrels,
                run,
                exponential: map(&c["ndcg_exponential"]),
                mean_exponential: c["mean_exponential"].as_f64().unwrap(),
                linear: map(&c["ndcg_linear"]),
                mean_linear: c["mean_linear"].as_f64().unwrap(),
            }
        })
        .collect()
}
