use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use qoqa_core::corpus::parse_qrels;
use qoqa_core::eval::{compare_runs, read_trec_run, TrecRun};
use qoqa_core::optimizer::read_trace;

use super::evaluate::GainArg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Tsv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run files as NAME=PATH or PATH; the first is the baseline
    #[arg(long = "run")]
    pub runs: Vec<String>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// nDCG cutoff
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = GainArg::Exponential)]
    pub gain: GainArg,
    /// Summarize the optimization traces in this directory
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

fn parse_run_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (name, path)
        }
    }
}

#[derive(Debug, Default, PartialEq)]
pub struct TraceSummary {
    pub queries: usize,
    pub improved: usize,
    pub mean_original: f64,
    pub mean_best: f64,
    pub mean_prompts: f64,
}

pub fn summarize_traces(dir: &Path) -> Result<TraceSummary> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut s = TraceSummary::default();
    for path in &paths {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (bucket, prompts) =
            read_trace(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        s.queries += 1;
        let original = bucket.original().score;
        let best = bucket.best().score;
        if best > original {
            s.improved += 1;
        }
        s.mean_original += original;
        s.mean_best += best;
        s.mean_prompts += prompts.len() as f64;
    }
    if s.queries > 0 {
        let n = s.queries as f64;
        s.mean_original /= n;
        s.mean_best /= n;
        s.mean_prompts /= n;
    }
    Ok(s)
}

pub fn run(args: &ReportArgs) -> Result<String> {
    if args.runs.is_empty() && args.traces.is_none() {
        bail!("nothing to report: pass --run and --qrels, or --traces");
    }
    let mut out = String::new();
    if !args.runs.is_empty() {
        let Some(qrels_path) = &args.qrels else {
            bail!("comparing runs needs --qrels");
        };
        let qrels = parse_qrels(qrels_path)?;
        let mut loaded: Vec<(String, TrecRun)> = Vec::new();
        for arg in &args.runs {
            let (name, path) = parse_run_arg(arg);
            loaded.push((name, read_trec_run(&path)?));
        }
        let named: Vec<(&str, &TrecRun)> = loaded.iter().map(|(n, r)| (n.as_str(), r)).collect();
        let cmp = compare_runs(&named, &qrels, args.depth, args.gain.into())?;
        out.push_str(&match args.format {
            Format::Table => cmp.to_table(),
            Format::Tsv => cmp.to_tsv(),
        });
    }
    if let Some(dir) = &args.traces {
        let s = summarize_traces(dir)?;
        if !out.is_empty() {
            out.push('\n');
        }
        let rows = [
            ("queries", s.queries.to_string()),
            ("improved", s.improved.to_string()),
            ("mean original score", format!("{:.4}", s.mean_original)),
            ("mean best score", format!("{:.4}", s.mean_best)),
            ("mean prompts", format!("{:.2}", s.mean_prompts)),
        ];
        match args.format {
            Format::Table => {
                for (k, v) in rows {
                    out.push_str(&format!("{k:<20} {v:>10}\n"));
                }
            }
            Format::Tsv => {
                for (k, v) in rows {
                    out.push_str(&format!("{k}\t{v}\n"));
                }
            }
        }
    }
    Ok(out)
}
