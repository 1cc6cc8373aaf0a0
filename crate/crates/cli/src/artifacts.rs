//! On-disk layout: index directories, optimized-query files and their
//! metadata sidecars, per-query traces.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qoqa_core::dense::EmbeddingStore;
use qoqa_core::sparse::InvertedIndex;

pub const INDEX_FORMAT: &str = "qoqa-index";
pub const INDEX_VERSION: u32 = 1;
const SPARSE_FILE: &str = "sparse.idx";
const DENSE_FILE: &str = "dense.bin";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseInfo {
    pub dim: usize,
    pub documents: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub documents: usize,
    pub vocabulary: usize,
    pub avg_doc_length: f64,
    pub dense: Option<DenseInfo>,
}

pub struct IndexDir {
    pub manifest: Manifest,
    pub sparse: InvertedIndex,
    pub dense: Option<EmbeddingStore>,
}

pub fn write_index(dir: &Path, sparse: &InvertedIndex, dense: Option<&EmbeddingStore>) -> Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    sparse.save(dir.join(SPARSE_FILE))?;
    let dense_path = dir.join(DENSE_FILE);
    match dense {
        Some(store) => store.save(&dense_path)?,
        None if dense_path.exists() => {
            fs::remove_file(&dense_path).with_context(|| format!("removing stale {}", dense_path.display()))?
        }
        None => {}
    }
    let manifest = Manifest {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        documents: sparse.total_docs(),
        vocabulary: sparse.vocabulary_size(),
        avg_doc_length: sparse.avg_doc_length(),
        dense: dense.map(|s| DenseInfo {
            dim: s.dim(),
            documents: s.len(),
        }),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_index(dir: &Path, want_dense: bool) -> Result<IndexDir> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.format != INDEX_FORMAT || manifest.version != INDEX_VERSION {
        bail!(
            "{}: unsupported index {} v{} (expected {INDEX_FORMAT} v{INDEX_VERSION})",
            manifest_path.display(),
            manifest.format,
            manifest.version
        );
    }
    let sparse = InvertedIndex::load(dir.join(SPARSE_FILE))?;
    let dense = match (&manifest.dense, want_dense) {
        (Some(_), true) => Some(EmbeddingStore::load(dir.join(DENSE_FILE))?),
        (None, true) => bail!(
            "{} has no dense store; re-run `qoqa index` with --embeddings",
            dir.display()
        ),
        (_, false) => None,
    };
    Ok(IndexDir {
        manifest,
        sparse,
        dense,
    })
}

/// One line of the optimized-queries file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizedRow {
    pub query_id: String,
    pub original: String,
    pub best_query: String,
    pub best_score: f64,
    pub baseline_score: f64,
    pub iterations: u32,
}

/// Reads completed rows, dropping a torn final line left by an
/// interrupted run so that appending can resume cleanly.
pub fn read_optimized(path: &Path) -> Result<Vec<OptimizedRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        log::warn!("{}: discarding incomplete last line", path.display());
        text.truncate(keep);
        fs::write(path, &text).with_context(|| format!("rewriting {}", path.display()))?;
    }
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: OptimizedRow =
            serde_json::from_str(line).with_context(|| format!("{}:{}: bad row", path.display(), i + 1))?;
        if !seen.insert(row.query_id.clone()) {
            bail!("{}:{}: duplicate query id {}", path.display(), i + 1, row.query_id);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub struct RowWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl RowWriter {
    pub fn append(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(RowWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    /// Writes and flushes one row, so a crash never loses a finished query.
    pub fn write(&mut self, row: &OptimizedRow) -> Result<()> {
        serde_json::to_writer(&mut self.out, row)?;
        self.out.write_all(b"\n")?;
        self.out
            .flush()
            .with_context(|| format!("writing {}", self.path.display()))
    }
}

pub fn meta_path(output: &Path) -> PathBuf {
    sibling(output, "meta.json")
}

pub fn default_trace_dir(output: &Path) -> PathBuf {
    sibling(output, "traces")
}

fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    output.with_file_name(name)
}

/// Query ids become file names; anything outside `[A-Za-z0-9._-]` is
/// replaced by `_`.
pub fn trace_file(dir: &Path, query_id: &str) -> PathBuf {
    let safe: String = query_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join(format!("{safe}.jsonl"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
