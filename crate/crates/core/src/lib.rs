//! Retrieval-aligned query optimization.
//!
//! A query is rewritten over many rounds by a rephraser (an LLM in
//! production, a mock in tests). Each candidate is scored by how strongly it
//! retrieves the documents that the original query retrieved, using BM25,
//! dense inner product, or a mix of both. The best-scoring text wins.
//!
//! The pieces, roughly in pipeline order:
//!
//! - [`corpus`]: BEIR-style corpus, query and qrels files.
//! - [`analyzer`]: tokenization (lowercasing, stopwords, Porter stemming).
//! - [`sparse`]: inverted index and BM25 retrieval.
//! - [`dense`]: precomputed document embeddings, query embedding providers
//!   and exact inner-product search.
//! - [`alignment`]: alignment scores and the bucket of scored rephrasings.
//! - [`optimizer`]: prompts, rephrasers and the optimization loop.
//! - [`eval`]: TREC runs, nDCG@k and run comparison.

pub mod alignment;
pub mod analyzer;
mod artifact;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod http;
pub mod optimizer;
pub mod par;
pub mod rank;
pub mod sparse;

pub use alignment::{AlignmentMode, Backends, QueryBucket, QueryBucketEntry};
pub use corpus::{Collection, Document, Qrels, QueryRecord};
pub use dense::{EmbeddingProvider, EmbeddingStore};
pub use error::{Error, Result};
pub use eval::{Gain, TrecRun};
pub use optimizer::{optimize_query, OptimizationResult, OptimizerConfig, Rephraser};
pub use par::Exec;
pub use rank::ScoredDoc;
pub use sparse::{Bm25Params, InvertedIndex};
