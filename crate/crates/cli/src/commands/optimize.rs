use std::collections::HashSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::{json, Value};

use qoqa_core::alignment::Backends;
use qoqa_core::corpus::{parse_corpus, parse_queries, Collection, QueryRecord};
use qoqa_core::http::RequestLimiter;
use qoqa_core::optimizer::{
    optimize_query, write_trace, LlmConfig, LlmHttp, MockEcho, MockScripted, OptimizerConfig, Rephraser,
    TEMPLATE_VERSION,
};

use super::{require_file, with_pool, Loaded};
use crate::artifacts::{
    default_trace_dir, meta_path, read_json, read_optimized, trace_file, write_json, OptimizedRow, RowWriter,
};
use crate::config::{RephraserKind, Tunables};

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Queries JSONL ({"_id", "text"} per line)
    #[arg(long)]
    pub queries: PathBuf,
    /// Index directory written by `qoqa index`
    #[arg(long)]
    pub index: PathBuf,
    /// Optimized-queries JSONL; existing rows are kept and skipped
    #[arg(long)]
    pub out: PathBuf,
    /// Per-query trace directory [default: <out>.traces]
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

/// A configured rephraser; each query gets its own fresh copy.
enum Prototype {
    Echo,
    Scripted(MockScripted),
    Llm(LlmHttp),
}

impl Prototype {
    fn new(t: &Tunables, limiter: &RequestLimiter) -> Result<Prototype> {
        Ok(match t.rephraser_kind() {
            RephraserKind::MockEcho => Prototype::Echo,
            RephraserKind::MockScripted => {
                let Some(path) = &t.script else {
                    bail!("--rephraser mock-scripted needs --script");
                };
                Prototype::Scripted(MockScripted::from_file(path)?)
            }
            RephraserKind::LlmHttp => {
                let mut cfg = LlmConfig::from_env(t.model())?;
                cfg.seed = t.seed;
                Prototype::Llm(LlmHttp::new(cfg, limiter.clone())?)
            }
        })
    }

    fn make(&self) -> Box<dyn Rephraser> {
        match self {
            Prototype::Echo => Box::new(MockEcho::new()),
            Prototype::Scripted(s) => Box::new(s.clone()),
            Prototype::Llm(l) => Box::new(l.clone()),
        }
    }
}

fn run_metadata(t: &Tunables, cfg: &OptimizerConfig, loaded: &Loaded) -> Value {
    json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "template_version": TEMPLATE_VERSION,
        "optimizer": cfg,
        "expansion": cfg.expansion,
        "rephraser": t.rephraser_kind(),
        "model": matches!(t.rephraser_kind(), RephraserKind::LlmHttp).then(|| t.model()),
        "script": t.script,
        "seed": t.seed,
        "bm25": { "k1": loaded.bm25.k1, "b": loaded.bm25.b },
        "embedder": t.embedder,
    })
}

fn optimize_one(
    q: &QueryRecord,
    cfg: &OptimizerConfig,
    backends: &Backends<'_>,
    collection: &Collection,
    proto: &Prototype,
    trace_dir: &Path,
) -> Result<OptimizedRow> {
    let mut rephraser = proto.make();
    let outcome = optimize_query(q, cfg, backends, collection, rephraser.as_mut());
    let (bucket, prompts) = match &outcome {
        Ok(r) => (Some(&r.trace), r.prompts.as_slice()),
        Err(f) => (f.partial.as_ref(), f.prompts.as_slice()),
    };
    if let Some(bucket) = bucket {
        let path = trace_file(trace_dir, &q.id);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trace(BufWriter::new(file), bucket, prompts).with_context(|| format!("writing {}", path.display()))?;
    }
    let res = outcome?;
    Ok(OptimizedRow {
        query_id: q.id.clone(),
        original: q.text.clone(),
        best_query: res.best_query,
        best_score: res.best_score,
        baseline_score: res.original_score,
        iterations: res.iterations_run,
    })
}

/// Returns the number of queries that failed.
pub fn run(args: &OptimizeArgs, t: &Tunables) -> Result<usize> {
    require_file(&args.corpus, "corpus")?;
    require_file(&args.queries, "queries file")?;
    let cfg = t.optimizer()?;
    let limiter = RequestLimiter::new(t.max_in_flight());
    let proto = Prototype::new(t, &limiter)?;

    let collection = Collection::new(parse_corpus(&args.corpus)?)?;
    let queries = parse_queries(&args.queries)?;
    let loaded = Loaded::open(&args.index, cfg.mode.needs_dense(), t, &limiter)?;
    if loaded.index.manifest.documents != collection.len() {
        log::warn!(
            "index holds {} documents but the corpus has {}",
            loaded.index.manifest.documents,
            collection.len()
        );
    }

    let meta = run_metadata(t, &cfg, &loaded);
    let meta_file = meta_path(&args.out);
    let done = read_optimized(&args.out)?;
    if meta_file.exists() && !done.is_empty() {
        let previous: Value = read_json(&meta_file)?;
        if previous != meta {
            bail!(
                "{} was produced with different settings (see {}); use a new output path",
                args.out.display(),
                meta_file.display()
            );
        }
    }
    let mut writer = RowWriter::append(&args.out)?;
    write_json(&meta_file, &meta)?;

    let trace_dir = args.traces.clone().unwrap_or_else(|| default_trace_dir(&args.out));
    fs::create_dir_all(&trace_dir).with_context(|| format!("creating {}", trace_dir.display()))?;

    let done_ids: HashSet<&str> = done.iter().map(|r| r.query_id.as_str()).collect();
    let pending: Vec<&QueryRecord> = queries.iter().filter(|q| !done_ids.contains(q.id.as_str())).collect();
    if !done.is_empty() {
        eprintln!("resuming: {} queries already optimized", queries.len() - pending.len());
    }

    let backends = loaded.backends();
    let jobs = t.jobs();
    let (finished, failed) = with_pool(jobs, |exec| -> Result<(usize, usize)> {
        let (mut finished, mut failed) = (0, 0);
        // Rows are written in input order after each chunk completes.
        for chunk in pending.chunks(jobs) {
            let results = exec.map(chunk, |q| {
                optimize_one(q, &cfg, &backends, &collection, &proto, &trace_dir)
            });
            for (q, result) in chunk.iter().zip(results) {
                match result {
                    Ok(row) => {
                        writer.write(&row)?;
                        finished += 1;
                        log::info!("{}: {:.4} -> {:.4}", q.id, row.baseline_score, row.best_score);
                    }
                    Err(e) => {
                        failed += 1;
                        log::error!("query {} failed: {e:#}", q.id);
                    }
                }
            }
        }
        Ok((finished, failed))
    })??;
    eprintln!(
        "optimized {finished} queries, {failed} failed, {} skipped",
        queries.len() - pending.len()
    );
    Ok(failed)
}
