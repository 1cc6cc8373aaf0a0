use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use qoqa_core::alignment::{retrieve, AlignmentMode};
use qoqa_core::corpus::parse_qrels;
use qoqa_core::eval::{compare_runs, ndcg_at_k, write_trec_run, Comparison, Gain, TrecRun};
use qoqa_core::http::RequestLimiter;
use qoqa_core::rank::ScoredDoc;

use super::{require_file, with_pool, Loaded};
use crate::artifacts::{meta_path, read_json, read_optimized, write_json};
use crate::config::Tunables;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Retriever {
    Sparse,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GainArg {
    Exponential,
    Linear,
}

impl From<GainArg> for Gain {
    fn from(g: GainArg) -> Gain {
        match g {
            GainArg::Exponential => Gain::Exponential,
            GainArg::Linear => Gain::Linear,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Output of `qoqa optimize`
    #[arg(long)]
    pub optimized: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Directory for runs and reports
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Retriever::Sparse)]
    pub retriever: Retriever,
    /// Retrieval depth and nDCG cutoff
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = GainArg::Exponential)]
    pub gain: GainArg,
    /// Also evaluate the merge of the original and optimized rankings
    #[arg(long)]
    pub union: bool,
}

/// Documents from both rankings, each keeping its higher score, cut to `depth`.
pub fn merge_rankings(a: &[ScoredDoc], b: &[ScoredDoc], depth: usize) -> Vec<ScoredDoc> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for d in a.iter().chain(b) {
        best.entry(d.doc_id.as_str())
            .and_modify(|s| *s = s.max(d.score))
            .or_insert(d.score);
    }
    let mut merged: Vec<ScoredDoc> = best.into_iter().map(|(id, s)| ScoredDoc::new(id, s)).collect();
    merged.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.doc_id.cmp(&y.doc_id)));
    merged.truncate(depth);
    merged
}

pub fn run(args: &EvaluateArgs, t: &Tunables) -> Result<Comparison> {
    if args.depth == 0 {
        bail!("--depth must be at least 1");
    }
    require_file(&args.optimized, "optimized-queries file")?;
    require_file(&args.qrels, "qrels")?;
    let rows = read_optimized(&args.optimized)?;
    if rows.is_empty() {
        bail!("{} has no optimized queries", args.optimized.display());
    }
    let qrels = parse_qrels(&args.qrels)?;

    let dense = args.retriever == Retriever::Dense;
    let limiter = RequestLimiter::new(t.max_in_flight());
    let loaded = Loaded::open(&args.index, dense, t, &limiter)?;
    let backends = loaded.backends();
    let mode = if dense {
        AlignmentMode::Dense
    } else {
        AlignmentMode::Bm25
    };

    let rankings = with_pool(t.jobs(), |exec| {
        exec.map(&rows, |r| -> qoqa_core::Result<(Vec<ScoredDoc>, Vec<ScoredDoc>)> {
            let original = retrieve(&r.original, mode, args.depth, &backends)?;
            let best = if r.best_query == r.original {
                original.clone()
            } else {
                retrieve(&r.best_query, mode, args.depth, &backends)?
            };
            Ok((original, best))
        })
    })?;

    let mut original_run = TrecRun::new("original")?;
    let mut optimized_run = TrecRun::new("optimized")?;
    let mut union_run = TrecRun::new("union")?;
    for (row, ranking) in rows.iter().zip(rankings) {
        let (original, best) = ranking.with_context(|| format!("retrieving for query {}", row.query_id))?;
        if args.union {
            union_run.insert(&row.query_id, merge_rankings(&original, &best, args.depth))?;
        }
        original_run.insert(&row.query_id, original)?;
        optimized_run.insert(&row.query_id, best)?;
    }

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut named = vec![("original", &original_run), ("optimized", &optimized_run)];
    if args.union {
        named.push(("union", &union_run));
    }
    for (name, run) in &named {
        write_trec_run(args.out_dir.join(format!("{name}.trec")), run)?;
    }

    let gain = Gain::from(args.gain);
    let comparison = compare_runs(&named, &qrels, args.depth, gain)?;
    let mut per_query = BTreeMap::new();
    for (name, run) in &named {
        per_query.insert(*name, ndcg_at_k(run, &qrels, args.depth, gain)?.per_query);
    }

    let meta_file = meta_path(&args.optimized);
    let optimize_meta: Value = if meta_file.exists() {
        read_json(&meta_file)?
    } else {
        Value::Null
    };
    let report = json!({
        "metadata": {
            "retriever": args.retriever,
            "depth": args.depth,
            "gain": gain,
            "union": args.union,
            "bm25": { "k1": loaded.bm25.k1, "b": loaded.bm25.b },
            "queries": rows.len(),
            "expansion": optimize_meta.get("expansion").cloned().unwrap_or(Value::Null),
            "optimize": optimize_meta,
        },
        "comparison": comparison,
        "per_query": per_query,
    });
    write_json(&args.out_dir.join("report.json"), &report)?;
    fs::write(args.out_dir.join("report.tsv"), comparison.to_tsv())?;
    fs::write(args.out_dir.join("report.txt"), comparison.to_table())?;
    Ok(comparison)
}
