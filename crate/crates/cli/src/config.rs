//! Tunables shared by flags and the config file. A flag wins over the file,
//! the file wins over the built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use qoqa_core::alignment::{AlignmentMode, DEFAULT_ALPHA};
use qoqa_core::dense::{HttpProviderConfig, ProviderSpec};
use qoqa_core::optimizer::OptimizerConfig;
use qoqa_core::sparse::Bm25Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Bm25,
    Dense,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RephraserKind {
    MockEcho,
    MockScripted,
    LlmHttp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Hash-seeded unit vectors; for tests and dry runs.
    Mock,
    /// Precomputed query vectors keyed by text.
    File,
    Http,
}

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tunables {
    /// Documents retrieved per query for prompts and alignment scores [default: 5]
    #[arg(long, help_heading = "Optimization")]
    pub n: Option<usize>,
    /// Scored rephrasings shown in each prompt [default: 3]
    #[arg(long, help_heading = "Optimization")]
    pub k: Option<usize>,
    /// Rephrasings requested by the first call [default: 3]
    #[arg(long, help_heading = "Optimization")]
    pub r0: Option<usize>,
    /// Rephrasings requested per later iteration [default: 1]
    #[arg(long, help_heading = "Optimization")]
    pub ri: Option<usize>,
    /// Optimization iterations after the first call [default: 50]
    #[arg(long, help_heading = "Optimization")]
    pub iters: Option<u32>,
    /// Alignment score [default: bm25]
    #[arg(long, value_enum, help_heading = "Optimization")]
    pub score: Option<ScoreKind>,
    /// Weight of BM25 in the hybrid score [default: 0.1]
    #[arg(long, help_heading = "Optimization")]
    pub alpha: Option<f64>,
    /// Sampling temperature passed to the rephraser [default: 1.0]
    #[arg(long, help_heading = "Optimization")]
    pub temperature: Option<f64>,
    /// Leave retrieved documents out of the prompt
    #[arg(long, help_heading = "Optimization")]
    #[serde(skip)]
    pub no_expansion: bool,
    /// Config-file form of --no-expansion
    #[arg(skip)]
    pub expansion: Option<bool>,
    /// Stop after this many iterations without improvement [default: off]
    #[arg(long, help_heading = "Optimization")]
    pub patience: Option<u32>,
    /// Analyzer tokens kept per document in the prompt [default: 512]
    #[arg(long, help_heading = "Optimization")]
    pub doc_tokens: Option<usize>,

    /// [default: mock-echo]
    #[arg(long, value_enum, help_heading = "Rephraser")]
    pub rephraser: Option<RephraserKind>,
    /// JSONL script for mock-scripted: line j lists the outputs of call j
    #[arg(long, help_heading = "Rephraser")]
    pub script: Option<PathBuf>,
    /// Chat model name for llm-http [default: gpt-3.5-turbo]
    #[arg(long, help_heading = "Rephraser")]
    pub model: Option<String>,
    /// Forwarded to llm-http as the request seed; recorded in run metadata
    #[arg(long, help_heading = "Rephraser")]
    pub seed: Option<u64>,
    /// Concurrent LLM or embedding requests across all queries [default: 4]
    #[arg(long, help_heading = "Rephraser")]
    pub max_in_flight: Option<usize>,

    /// BM25 k1 [default: 1.2]
    #[arg(long, help_heading = "Retrieval")]
    pub k1: Option<f64>,
    /// BM25 b [default: 0.75]
    #[arg(long, help_heading = "Retrieval")]
    pub b: Option<f64>,
    /// Query embedder for dense and hybrid scoring
    #[arg(long, value_enum, help_heading = "Retrieval")]
    pub embedder: Option<EmbedderKind>,
    /// Query vectors for --embedder file (JSONL of {"text","vector"})
    #[arg(long, help_heading = "Retrieval")]
    pub query_embeddings: Option<PathBuf>,
    /// Endpoint for --embedder http
    #[arg(long, help_heading = "Retrieval")]
    pub embed_endpoint: Option<String>,

    /// Worker threads [default: available cores]
    #[arg(long, help_heading = "Execution")]
    pub jobs: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Tunables {
    /// Fills every unset field from `file`.
    pub fn overlay(mut self, file: Tunables) -> Tunables {
        overlay!(self, file;
            n, k, r0, ri, iters, score, alpha, temperature, expansion, patience, doc_tokens,
            rephraser, script, model, seed, max_in_flight, k1, b, embedder, query_embeddings,
            embed_endpoint, jobs);
        if self.no_expansion {
            self.expansion = Some(false);
        }
        self
    }

    pub fn load_file(path: &Path) -> Result<Tunables> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn mode(&self) -> Result<AlignmentMode> {
        Ok(match self.score.unwrap_or(ScoreKind::Bm25) {
            ScoreKind::Bm25 => AlignmentMode::Bm25,
            ScoreKind::Dense => AlignmentMode::Dense,
            ScoreKind::Hybrid => AlignmentMode::hybrid(self.alpha.unwrap_or(DEFAULT_ALPHA))?,
        })
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig> {
        let d = OptimizerConfig::default();
        let cfg = OptimizerConfig {
            n_docs: self.n.unwrap_or(d.n_docs),
            top_k: self.k.unwrap_or(d.top_k),
            r_initial: self.r0.unwrap_or(d.r_initial),
            r_step: self.ri.unwrap_or(d.r_step),
            max_iters: self.iters.unwrap_or(d.max_iters),
            mode: self.mode()?,
            temperature: self.temperature.unwrap_or(d.temperature),
            expansion: self.expansion.unwrap_or(d.expansion),
            max_doc_tokens: self.doc_tokens.unwrap_or(d.max_doc_tokens),
            patience: self.patience.or(d.patience),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bm25(&self) -> Result<Bm25Params> {
        let d = Bm25Params::default();
        Ok(Bm25Params::new(self.k1.unwrap_or(d.k1), self.b.unwrap_or(d.b))?)
    }

    pub fn rephraser_kind(&self) -> RephraserKind {
        self.rephraser.unwrap_or(RephraserKind::MockEcho)
    }

    pub fn model(&self) -> String {
        self.model.clone().unwrap_or_else(|| "gpt-3.5-turbo".into())
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.unwrap_or(4).max(1)
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    /// Query embedder for a store of dimension `dim`, if one is configured.
    pub fn provider_spec(&self, dim: usize) -> Result<Option<ProviderSpec>> {
        let kind = match (self.embedder, &self.query_embeddings, &self.embed_endpoint) {
            (Some(k), _, _) => k,
            (None, Some(_), _) => EmbedderKind::File,
            (None, None, Some(_)) => EmbedderKind::Http,
            (None, None, None) => return Ok(None),
        };
        Ok(Some(match kind {
            EmbedderKind::Mock => ProviderSpec::Mock { dim },
            EmbedderKind::File => {
                let Some(path) = &self.query_embeddings else {
                    bail!("--embedder file needs --query-embeddings");
                };
                ProviderSpec::FileLookup {
                    path: path.clone(),
                    dim,
                }
            }
            EmbedderKind::Http => {
                let Some(url) = &self.embed_endpoint else {
                    bail!("--embedder http needs --embed-endpoint");
                };
                ProviderSpec::Http(HttpProviderConfig::new(url.clone(), dim))
            }
        }))
    }
}
