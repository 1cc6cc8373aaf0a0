use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::http::{JsonClient, RequestLimiter, RetryPolicy};

/// Query instruction expected by the BGE v1.5 English embedding models.
pub const BGE_QUERY_PREFIX: &str = "Represent this sentence for searching relevant passages:";

/// Source of query embeddings. Document vectors never pass through a
/// provider; they are loaded precomputed.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    fn embed_query(&self, text: &str) -> Result<Vec<f32>> {
        if text.trim().is_empty() {
            return Err(Error::InvalidConfig("cannot embed an empty query".into()));
        }
        let mut out = self.embed_batch(&[text.to_string()])?;
        let v = out
            .pop()
            .ok_or_else(|| Error::ProviderUnavailable("provider returned no vector".into()))?;
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                id: text.to_string(),
                found: v.len(),
                expected: self.dim(),
            });
        }
        Ok(v)
    }
}

/// Deterministic stand-in: each text maps to a unit vector seeded from the
/// SHA-256 of its bytes. Specific texts can be pinned to fixed vectors.
#[derive(Clone, Debug)]
pub struct MockProvider {
    dim: usize,
    fixed: HashMap<String, Vec<f32>>,
}

impl MockProvider {
    pub fn new(dim: usize) -> Self {
        MockProvider {
            dim: dim.max(1),
            fixed: HashMap::new(),
        }
    }

    pub fn with_fixed(mut self, text: impl Into<String>, vector: Vec<f32>) -> Self {
        self.fixed.insert(text.into(), vector);
        self
    }

    pub fn hashed_vector(&self, text: &str) -> Vec<f32> {
        let seed: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.iter().map(|x| (x / norm) as f32).collect();
            }
        }
    }
}

impl EmbeddingProvider for MockProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts
            .iter()
            .map(|t| self.fixed.get(t).cloned().unwrap_or_else(|| self.hashed_vector(t)))
            .collect())
    }
}

#[derive(Deserialize)]
struct LookupLine {
    text: String,
    vector: Vec<f32>,
}

/// Query vectors precomputed offline, keyed by exact query text.
/// File format: JSONL of `{"text": string, "vector": [real, ...]}`
/// (other fields such as `_id` are ignored).
#[derive(Clone, Debug)]
pub struct FileLookupProvider {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl FileLookupProvider {
    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut vectors = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LookupLine =
                serde_json::from_str(&line).map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
            if rec.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: rec.text,
                    found: rec.vector.len(),
                    expected: dim,
                });
            }
            if vectors.insert(rec.text.clone(), rec.vector).is_some() {
                return Err(Error::DuplicateId(rec.text));
            }
        }
        Ok(FileLookupProvider { dim, vectors })
    }
}

impl EmbeddingProvider for FileLookupProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .ok_or_else(|| Error::ProviderUnavailable(format!("no precomputed vector for {t:?}")))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    pub dim: usize,
    /// Prepended (with a single space) to every query before the request.
    pub query_prefix: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpProviderConfig {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        HttpProviderConfig {
            endpoint: endpoint.into(),
            dim,
            query_prefix: Some(BGE_QUERY_PREFIX.to_string()),
            token_env: "QOQA_EMBED_API_KEY".into(),
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Embedding service speaking `{"input": [...]}` -> `{"vectors": [[...]]}`.
#[derive(Clone, Debug)]
pub struct HttpProvider {
    config: HttpProviderConfig,
    client: JsonClient,
    token: Option<String>,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig, limiter: RequestLimiter) -> Result<Self> {
        let client = JsonClient::new(config.timeout, config.retry, limiter)?;
        let token = std::env::var(&config.token_env).ok();
        Ok(HttpProvider { config, client, token })
    }

    pub fn prefixed(&self, text: &str) -> String {
        match &self.config.query_prefix {
            Some(prefix) if !prefix.is_empty() => format!("{prefix} {text}"),
            _ => text.to_string(),
        }
    }
}

impl EmbeddingProvider for HttpProvider {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let input: Vec<String> = texts.iter().map(|t| self.prefixed(t)).collect();
        let body = self.client.post(
            &self.config.endpoint,
            self.token.as_deref(),
            &EmbedRequest { input: &input },
        )?;
        let resp: EmbedResponse = serde_json::from_str(&body)
            .map_err(|e| Error::ProviderUnavailable(format!("bad embedding response: {e}")))?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::ProviderUnavailable(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        for (text, v) in texts.iter().zip(&resp.vectors) {
            if v.len() != self.config.dim {
                return Err(Error::DimensionMismatch {
                    id: text.clone(),
                    found: v.len(),
                    expected: self.config.dim,
                });
            }
        }
        Ok(resp.vectors)
    }
}

/// Declarative provider selection, as read from configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum ProviderSpec {
    Mock { dim: usize },
    FileLookup { path: PathBuf, dim: usize },
    Http(HttpProviderConfig),
}

impl ProviderSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProviderSpec::Mock { dim } | ProviderSpec::FileLookup { dim, .. } => *dim,
            ProviderSpec::Http(c) => c.dim,
        }
    }

    pub fn build(&self, limiter: RequestLimiter) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            ProviderSpec::Mock { dim } => Box::new(MockProvider::new(*dim)),
            ProviderSpec::FileLookup { path, dim } => Box::new(FileLookupProvider::load(path, *dim)?),
            ProviderSpec::Http(config) => Box::new(HttpProvider::new(config.clone(), limiter)?),
        })
    }
}
