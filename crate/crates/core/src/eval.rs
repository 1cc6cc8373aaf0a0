//! TREC run files, nDCG@k and run comparison reports.
//!
//! nDCG follows trec_eval: documents are re-sorted by score (descending,
//! ties by document id descending) regardless of the rank column, the ideal
//! ranking uses every judged grade, and the mean runs over the judged
//! queries that have at least one relevant document. A judged query absent
//! from the run scores 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rank::ScoredDoc;

/// Ranked documents per query, each list in rank order (rank 1 first).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrecRun {
    pub tag: String,
    queries: BTreeMap<String, Vec<ScoredDoc>>,
}

fn check_field(what: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        return Err(Error::InvalidConfig(format!(
            "{what} {value:?} is empty or contains whitespace"
        )));
    }
    Ok(())
}

impl TrecRun {
    pub fn new(tag: impl Into<String>) -> Result<Self> {
        let tag = tag.into();
        check_field("run tag", &tag)?;
        Ok(TrecRun {
            tag,
            queries: BTreeMap::new(),
        })
    }

    /// Sets the ranking for `qid`. Documents must already be in rank order
    /// with non-increasing scores.
    pub fn insert(&mut self, qid: impl Into<String>, docs: Vec<ScoredDoc>) -> Result<()> {
        let qid = qid.into();
        check_field("query id", &qid)?;
        for d in &docs {
            check_field("document id", &d.doc_id)?;
            if !d.score.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite score for {qid}/{}", d.doc_id)));
            }
        }
        if docs.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(Error::InvalidConfig(format!("scores for {qid} increase with rank")));
        }
        if let Some(dup) = first_duplicate(docs.iter().map(|d| d.doc_id.as_str())) {
            return Err(Error::InvalidConfig(format!("document {dup} ranked twice for {qid}")));
        }
        self.queries.insert(qid, docs);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&[ScoredDoc]> {
        self.queries.get(qid).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> {
        self.queries.iter().map(|(q, d)| (q.as_str(), d.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

fn first_duplicate<'a>(ids: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    let mut seen = std::collections::HashSet::new();
    ids.into_iter().find(|id| !seen.insert(*id))
}

/// Writes `qid Q0 docid rank score tag` lines, queries in id order.
pub fn write_trec_run(path: impl AsRef<Path>, run: &TrecRun) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (qid, docs) in run.iter() {
        for (i, d) in docs.iter().enumerate() {
            writeln!(out, "{qid} Q0 {} {} {} {}", d.doc_id, i + 1, d.score, run.tag).map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trec_run(path: impl AsRef<Path>) -> Result<TrecRun> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut tag: Option<String> = None;
    // qid -> (line, rank, doc)
    let mut rows: BTreeMap<String, Vec<(usize, usize, ScoredDoc)>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [qid, _q0, doc, rank, score, row_tag] = fields[..] else {
            return Err(Error::malformed(
                path,
                lineno,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        };
        let rank = usize::from_str(rank)
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::malformed(path, lineno, format!("bad rank {rank:?}")))?;
        let score = f64::from_str(score)
            .ok()
            .filter(|s| s.is_finite())
            .ok_or_else(|| Error::malformed(path, lineno, format!("bad score {score:?}")))?;
        match &tag {
            Some(t) if t != row_tag => {
                return Err(Error::malformed(
                    path,
                    lineno,
                    format!("mixed run tags {t:?} and {row_tag:?}"),
                ));
            }
            Some(_) => {}
            None => tag = Some(row_tag.to_string()),
        }
        rows.entry(qid.to_string())
            .or_default()
            .push((lineno, rank, ScoredDoc::new(doc, score)));
    }

    let mut run = TrecRun {
        tag: tag.unwrap_or_default(),
        queries: BTreeMap::new(),
    };
    for (qid, mut docs) in rows {
        docs.sort_by_key(|(_, rank, _)| *rank);
        for (expected, (lineno, rank, _)) in docs.iter().enumerate() {
            if *rank != expected + 1 {
                return Err(Error::malformed(
                    path,
                    *lineno,
                    format!("query {qid}: expected rank {}, found {rank}", expected + 1),
                ));
            }
        }
        if let Some(w) = docs.windows(2).find(|w| w[1].2.score > w[0].2.score) {
            return Err(Error::malformed(
                path,
                w[1].0,
                format!("query {qid}: score increases with rank"),
            ));
        }
        if let Some(dup) = first_duplicate(docs.iter().map(|(_, _, d)| d.doc_id.as_str())) {
            let line = docs
                .iter()
                .filter(|(_, _, d)| d.doc_id == dup)
                .map(|(l, _, _)| *l)
                .max()
                .unwrap_or(0);
            return Err(Error::malformed(
                path,
                line,
                format!("query {qid}: document {dup} ranked twice"),
            ));
        }
        run.queries.insert(qid, docs.into_iter().map(|(_, _, d)| d).collect());
    }
    Ok(run)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `2^grade - 1`.
    #[default]
    Exponential,
    /// The grade itself (trec_eval's own convention).
    Linear,
}

impl Gain {
    pub fn value(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => 2f64.powi(grade.min(1023) as i32) - 1.0,
            Gain::Linear => grade as f64,
        }
    }
}

impl FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(Gain::Exponential),
            "linear" => Ok(Gain::Linear),
            other => Err(Error::InvalidConfig(format!("unknown gain `{other}`"))),
        }
    }
}

fn discount(rank0: usize) -> f64 {
    ((rank0 + 2) as f64).log2()
}

/// nDCG@k of one ranking against one query's judgments.
pub fn query_ndcg(docs: &[ScoredDoc], judged: &BTreeMap<String, u32>, k: usize, gain: Gain) -> f64 {
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.value(g) / discount(i))
        .sum();
    if idcg == 0.0 {
        return 0.0;
    }
    let mut ranked: Vec<&ScoredDoc> = docs.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.doc_id.cmp(&a.doc_id))
    });
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.value(judged.get(&d.doc_id).copied().unwrap_or(0)) / discount(i))
        .sum();
    dcg / idcg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdcgReport {
    pub k: usize,
    pub gain: Gain,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

pub fn ndcg_at_k(run: &TrecRun, qrels: &Qrels, k: usize, gain: Gain) -> Result<NdcgReport> {
    ndcg_at_k_with(run, qrels, k, gain, Exec::default())
}

pub fn ndcg_at_k_with(run: &TrecRun, qrels: &Qrels, k: usize, gain: Gain, exec: Exec) -> Result<NdcgReport> {
    let judged: Vec<(&str, &BTreeMap<String, u32>)> = qrels
        .iter()
        .filter(|(_, grades)| grades.values().any(|&g| g > 0))
        .collect();
    if judged.is_empty() {
        return Err(Error::EmptyQrels);
    }
    let scores = exec.map(&judged, |(qid, grades)| {
        query_ndcg(run.get(qid).unwrap_or(&[]), grades, k, gain)
    });
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(NdcgReport {
        k,
        gain,
        per_query: judged.iter().map(|(q, _)| q.to_string()).zip(scores).collect(),
        mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub ndcg: f64,
    /// Difference from the first run.
    pub delta: f64,
    pub queries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub k: usize,
    pub gain: Gain,
    pub rows: Vec<ComparisonRow>,
    /// Index of the best row; earliest wins ties.
    pub best: usize,
}

/// Scores every run against `qrels`; deltas are relative to the first run.
pub fn compare_runs(runs: &[(&str, &TrecRun)], qrels: &Qrels, k: usize, gain: Gain) -> Result<Comparison> {
    if runs.is_empty() {
        return Err(Error::InvalidConfig("no runs to compare".into()));
    }
    let mut rows = Vec::with_capacity(runs.len());
    for (name, run) in runs {
        let report = ndcg_at_k(run, qrels, k, gain)?;
        rows.push(ComparisonRow {
            name: name.to_string(),
            ndcg: report.mean,
            delta: 0.0,
            queries: report.per_query.len(),
        });
    }
    let base = rows[0].ndcg;
    for r in &mut rows {
        r.delta = r.ndcg - base;
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.ndcg > rows[best].ndcg { i } else { best });
    Ok(Comparison { k, gain, rows, best })
}

impl Comparison {
    fn metric(&self) -> String {
        format!("ndcg@{}", self.k)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("run\t{}\tdelta\tqueries\tbest\n", self.metric());
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if i == self.best { "*" } else { "" };
            let _ = writeln!(s, "{}\t{:.4}\t{:+.4}\t{}\t{mark}", r.name, r.ndcg, r.delta, r.queries);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let metric = self.metric();
        let name_w = self.rows.iter().map(|r| r.name.len()).chain([3]).max().unwrap_or(3);
        let mut s = format!("{:<name_w$}  {:>9}  {:>8}  {:>7}\n", "run", metric, "delta", "queries");
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if i == self.best { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:<name_w$}  {:>9.4}  {:>+8.4}  {:>7}{mark}",
                r.name, r.ndcg, r.delta, r.queries
            );
        }
        s
    }
}
