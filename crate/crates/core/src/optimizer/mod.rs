//! Iterative query rewriting driven by alignment scores.
//!
//! The documents retrieved for the original query are shown in every prompt
//! of a run. Each rephrasing is scored with
//! [`alignment_score`](crate::alignment::alignment_score) under the
//! configured [`AlignmentMode`], and the best entries so far are fed back to
//! the rephraser on each iteration.

pub mod prompt;
pub mod rephraser;

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::alignment::{alignment_score, mean_score, retrieve, AlignmentMode, Backends, QueryBucket, QueryBucketEntry};
use crate::corpus::{Collection, Document, QueryRecord};
use crate::error::{Error, Result};

pub use prompt::{build_prompt, prompt_hash, PromptOptions, TEMPLATE_VERSION};
pub use rephraser::{LlmConfig, LlmHttp, MockEcho, MockScripted, Recording, Rephraser};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Documents retrieved for the original query and scored against.
    pub n_docs: usize,
    /// Scored rephrasings shown to the rephraser after the first call.
    pub top_k: usize,
    pub r_initial: usize,
    pub r_step: usize,
    pub max_iters: u32,
    pub mode: AlignmentMode,
    pub temperature: f64,
    /// Include the retrieved documents in the prompt.
    pub expansion: bool,
    pub max_doc_tokens: usize,
    /// Stop after this many iterations without a new best score.
    pub patience: Option<u32>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            n_docs: 5,
            top_k: 3,
            r_initial: 3,
            r_step: 1,
            max_iters: 50,
            mode: AlignmentMode::Bm25,
            temperature: 1.0,
            expansion: true,
            max_doc_tokens: 512,
            patience: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_docs == 0 {
            return fail("n_docs must be at least 1");
        }
        if self.top_k == 0 {
            return fail("top_k must be at least 1");
        }
        if self.max_iters == 0 {
            return fail("max_iters must be at least 1");
        }
        if self.r_initial == 0 || self.r_step == 0 {
            return fail("rephrasings per call must be at least 1");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail("temperature must lie in [0, 2]");
        }
        if self.max_doc_tokens == 0 {
            return fail("max_doc_tokens must be at least 1");
        }
        if self.patience == Some(0) {
            return fail("patience must be at least 1 when set");
        }
        if let AlignmentMode::Hybrid { alpha } = self.mode {
            AlignmentMode::hybrid(alpha)?;
        }
        Ok(())
    }

    fn prompt_options(&self) -> PromptOptions {
        PromptOptions {
            include_documents: self.expansion,
            max_doc_tokens: self.max_doc_tokens,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub iteration: u32,
    pub requested: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub best_query: String,
    pub best_score: f64,
    pub original_score: f64,
    pub trace: QueryBucket,
    pub iterations_run: u32,
    pub prompts: Vec<PromptRecord>,
}

/// An aborted run, with whatever was scored before the failure.
#[derive(Debug)]
pub struct OptimizeFailure {
    pub error: Error,
    pub partial: Option<QueryBucket>,
    pub prompts: Vec<PromptRecord>,
}

impl fmt::Display for OptimizeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(b) => write!(f, "optimization aborted after {} scored queries", b.len()),
            None => f.write_str("optimization could not start"),
        }
    }
}

impl std::error::Error for OptimizeFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for OptimizeFailure {
    fn from(error: Error) -> Self {
        OptimizeFailure {
            error,
            partial: None,
            prompts: Vec::new(),
        }
    }
}

struct Run<'a, 'b> {
    query: &'a QueryRecord,
    cfg: &'a OptimizerConfig,
    backends: &'a Backends<'b>,
    docs: Vec<&'a Document>,
    bucket: QueryBucket,
    prompts: Vec<PromptRecord>,
}

impl Run<'_, '_> {
    fn step(&mut self, rephraser: &mut dyn Rephraser, iteration: u32, count: usize) -> Result<()> {
        let shown = if iteration == 0 {
            Vec::new()
        } else {
            self.bucket.top_k(self.cfg.top_k)
        };
        let prompt = build_prompt(self.query, &self.docs, &shown, count, &self.cfg.prompt_options());
        self.prompts.push(PromptRecord {
            iteration,
            requested: count,
            sha256: prompt_hash(&prompt),
        });
        for candidate in rephraser.rephrase(&prompt, count, self.cfg.temperature)? {
            let candidate = candidate.trim();
            if candidate.is_empty() || self.bucket.contains(candidate) {
                continue;
            }
            let score = alignment_score(candidate, self.cfg.mode, self.cfg.n_docs, self.backends)?;
            self.bucket.insert(QueryBucketEntry::new(candidate, score, iteration));
        }
        Ok(())
    }

    fn fail(self, error: Error) -> OptimizeFailure {
        OptimizeFailure {
            error,
            partial: Some(self.bucket),
            prompts: self.prompts,
        }
    }
}

/// Rewrites `query` with `rephraser` and returns the best-scoring text seen.
/// The original query competes as well, so the result never scores below it.
pub fn optimize_query(
    query: &QueryRecord,
    cfg: &OptimizerConfig,
    backends: &Backends<'_>,
    collection: &Collection,
    rephraser: &mut dyn Rephraser,
) -> std::result::Result<OptimizationResult, OptimizeFailure> {
    cfg.validate()?;
    backends.check(cfg.mode)?;

    let hits = retrieve(&query.text, cfg.mode, cfg.n_docs, backends)?;
    let docs: Vec<&Document> = hits
        .iter()
        .filter_map(|h| {
            let doc = collection.get(&h.doc_id);
            if doc.is_none() {
                log::warn!("retrieved document {} is not in the collection", h.doc_id);
            }
            doc
        })
        .collect();
    let original_score = mean_score(&hits);

    let mut run = Run {
        query,
        cfg,
        backends,
        docs,
        bucket: QueryBucket::new(QueryBucketEntry::new(query.text.clone(), original_score, 0)),
        prompts: Vec::new(),
    };

    if let Err(e) = run.step(rephraser, 0, cfg.r_initial) {
        return Err(run.fail(e));
    }
    let mut iterations_run = 0;
    let mut best = run.bucket.best().score;
    let mut stale = 0;
    for i in 1..=cfg.max_iters {
        if let Err(e) = run.step(rephraser, i, cfg.r_step) {
            return Err(run.fail(e));
        }
        iterations_run = i;
        let now = run.bucket.best().score;
        if now > best {
            best = now;
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.patience.is_some_and(|p| stale >= p) {
            log::debug!("query {}: no improvement for {stale} iterations, stopping", query.id);
            break;
        }
    }

    let top = run.bucket.best().clone();
    Ok(OptimizationResult {
        best_query: top.text,
        best_score: top.score,
        original_score,
        trace: run.bucket,
        iterations_run,
        prompts: run.prompts,
    })
}

/// One line of a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Entry(QueryBucketEntry),
    Prompt(PromptRecord),
}

/// Bucket entries in insertion order, then the prompt hashes.
pub fn write_trace<W: Write>(mut out: W, bucket: &QueryBucket, prompts: &[PromptRecord]) -> std::io::Result<()> {
    let records = bucket
        .entries()
        .iter()
        .cloned()
        .map(TraceRecord::Entry)
        .chain(prompts.iter().cloned().map(TraceRecord::Prompt));
    for r in records {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> std::io::Result<(QueryBucket, Vec<PromptRecord>)> {
    let mut bucket: Option<QueryBucket> = None;
    let mut prompts = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceRecord>(&line)? {
            TraceRecord::Entry(e) => match bucket.as_mut() {
                Some(b) => {
                    b.insert(e);
                }
                None => bucket = Some(QueryBucket::new(e)),
            },
            TraceRecord::Prompt(p) => prompts.push(p),
        }
    }
    let bucket = bucket.ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "trace has no entries"))?;
    Ok((bucket, prompts))
}
