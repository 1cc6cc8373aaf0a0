pub mod evaluate;
pub mod index;
pub mod optimize;
pub mod report;

use std::path::Path;

use anyhow::{bail, Result};

use qoqa_core::alignment::Backends;
use qoqa_core::dense::EmbeddingProvider;
use qoqa_core::http::RequestLimiter;
use qoqa_core::par::Exec;
use qoqa_core::sparse::Bm25Params;

use crate::artifacts::{read_index, IndexDir};
use crate::config::Tunables;

/// Runs `f` on a pool of `jobs` threads, or inline when `jobs` is 1 or the
/// build has no parallel support.
pub fn with_pool<R: Send>(jobs: usize, f: impl FnOnce(Exec) -> R + Send) -> Result<R> {
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| anyhow::anyhow!("starting worker pool: {e}"))?;
        return Ok(pool.install(|| f(Exec::Parallel)));
    }
    let _ = jobs;
    Ok(f(Exec::Sequential))
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() || path.is_dir() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

/// An index directory plus the query embedder its dense store needs.
pub struct Loaded {
    pub index: IndexDir,
    pub provider: Option<Box<dyn EmbeddingProvider>>,
    pub bm25: Bm25Params,
}

impl Loaded {
    pub fn open(dir: &Path, dense: bool, tunables: &Tunables, limiter: &RequestLimiter) -> Result<Loaded> {
        if !dir.is_dir() {
            bail!(
                "index directory {} does not exist; run `qoqa index` first",
                dir.display()
            );
        }
        let index = read_index(dir, dense)?;
        let provider = match &index.dense {
            Some(store) if dense => {
                let Some(spec) = tunables.provider_spec(store.dim())? else {
                    bail!(
                        "dense scoring needs a query embedder: pass --embedder, --query-embeddings or --embed-endpoint"
                    );
                };
                Some(spec.build(limiter.clone())?)
            }
            _ => None,
        };
        Ok(Loaded {
            index,
            provider,
            bm25: tunables.bm25()?,
        })
    }

    pub fn backends(&self) -> Backends<'_> {
        let b = Backends::sparse(&self.index.sparse, self.bm25);
        match (&self.index.dense, &self.provider) {
            (Some(store), Some(p)) => b.with_dense(store, p.as_ref()),
            _ => b,
        }
    }
}
