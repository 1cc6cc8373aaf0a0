use std::collections::HashSet;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use qoqa_core::corpus::parse_corpus;
use qoqa_core::dense::load_embeddings;
use qoqa_core::sparse::build_index_with;

use super::{require_file, with_pool};
use crate::artifacts::write_index;

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Corpus JSONL ({"_id", "title", "text"} per line)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output index directory
    #[arg(long)]
    pub out: PathBuf,
    /// Precomputed document vectors (JSONL of {"_id", "vector"})
    #[arg(long, requires = "dim")]
    pub embeddings: Option<PathBuf>,
    /// Embedding dimension
    #[arg(long)]
    pub dim: Option<usize>,
}

pub fn run(args: &IndexArgs, jobs: usize) -> Result<()> {
    require_file(&args.corpus, "corpus")?;
    let docs = parse_corpus(&args.corpus)?;
    let sparse = with_pool(jobs, |exec| build_index_with(&docs, exec))??;

    let dense = match (&args.embeddings, args.dim) {
        (Some(path), Some(dim)) => {
            require_file(path, "embeddings file")?;
            let store = load_embeddings(path, dim)?;
            let corpus_ids: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            let extra = store
                .doc_ids()
                .iter()
                .filter(|id| !corpus_ids.contains(id.as_str()))
                .count();
            if extra > 0 {
                log::warn!("{extra} embedded documents are not in the corpus");
            }
            let missing = docs.len() - (store.len() - extra);
            if missing > 0 {
                log::warn!("{missing} corpus documents have no embedding");
            }
            Some(store)
        }
        (Some(_), None) => bail!("--embeddings needs --dim"),
        _ => None,
    };

    let manifest = write_index(&args.out, &sparse, dense.as_ref())?;
    eprintln!(
        "indexed {} documents ({} terms){} into {}",
        manifest.documents,
        manifest.vocabulary,
        manifest
            .dense
            .as_ref()
            .map(|d| format!(", {} vectors of dim {}", d.documents, d.dim))
            .unwrap_or_default(),
        args.out.display()
    );
    Ok(())
}
