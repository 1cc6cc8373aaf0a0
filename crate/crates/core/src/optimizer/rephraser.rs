//! Sources of candidate rephrasings.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::original_query;
use crate::error::{Error, Result};
use crate::http::{JsonClient, RequestLimiter, RetryPolicy};

pub trait Rephraser: Send {
    /// Returns up to `count` distinct, trimmed, non-empty rephrasings.
    fn rephrase(&mut self, prompt: &str, count: usize, temperature: f64) -> Result<Vec<String>>;
}

impl<R: Rephraser + ?Sized> Rephraser for Box<R> {
    fn rephrase(&mut self, prompt: &str, count: usize, temperature: f64) -> Result<Vec<String>> {
        (**self).rephrase(prompt, count, temperature)
    }
}

fn clean(candidates: impl IntoIterator<Item = String>, count: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(count);
    for c in candidates {
        if out.len() == count {
            break;
        }
        let c = c.trim();
        if !c.is_empty() && !out.iter().any(|o| o == c) {
            out.push(c.to_string());
        }
    }
    out
}

/// Appends a running version suffix to the original query: `"q (v1)"`,
/// `"q (v2)"`, and so on. The counter spans calls.
#[derive(Clone, Debug, Default)]
pub struct MockEcho {
    counter: usize,
}

impl MockEcho {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Rephraser for MockEcho {
    fn rephrase(&mut self, prompt: &str, count: usize, _temperature: f64) -> Result<Vec<String>> {
        let q =
            original_query(prompt).ok_or_else(|| Error::RephraserFailure("prompt carries no original query".into()))?;
        Ok((0..count)
            .map(|_| {
                self.counter += 1;
                format!("{q} (v{})", self.counter)
            })
            .collect())
    }
}

/// Replays canned outputs: call `j` answers from script line `j`, cycling
/// back to the first line once the script is exhausted.
#[derive(Clone, Debug)]
pub struct MockScripted {
    lines: Vec<Vec<String>>,
    call: usize,
}

impl MockScripted {
    pub fn new(lines: Vec<Vec<String>>) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::InvalidConfig("rephraser script is empty".into()));
        }
        Ok(MockScripted { lines, call: 0 })
    }

    /// JSONL, one array of strings per line.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut lines = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let outputs: Vec<String> =
                serde_json::from_str(&line).map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
            lines.push(outputs);
        }
        Self::new(lines)
    }
}

impl Rephraser for MockScripted {
    fn rephrase(&mut self, _prompt: &str, count: usize, _temperature: f64) -> Result<Vec<String>> {
        let line = &self.lines[self.call % self.lines.len()];
        self.call += 1;
        Ok(clean(line.iter().cloned(), count))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmConfig {
    /// Base URL of an OpenAI-compatible API; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Forwarded as the request `seed` when set.
    pub seed: Option<u64>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Completion requests per call before giving up on getting `count`
    /// usable lines.
    pub max_attempts: u32,
}

pub const LLM_BASE_URL_ENV: &str = "QOQA_LLM_BASE_URL";
pub const LLM_API_KEY_ENV: &str = "QOQA_LLM_API_KEY";

impl LlmConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        LlmConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            seed: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_attempts: 3,
        }
    }

    /// Reads the base URL and API key from the environment.
    pub fn from_env(model: impl Into<String>) -> Result<Self> {
        let base = std::env::var(LLM_BASE_URL_ENV)
            .map_err(|_| Error::InvalidConfig(format!("{LLM_BASE_URL_ENV} is not set")))?;
        let mut cfg = LlmConfig::new(base, model);
        cfg.api_key = std::env::var(LLM_API_KEY_ENV).ok();
        Ok(cfg)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    #[serde(default)]
    content: Option<String>,
}

/// Strips list markers and wrapping quotes a model may add despite the
/// instructions.
fn parse_line(line: &str) -> String {
    let mut s = line.trim();
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = s.strip_prefix(marker) {
            s = rest.trim_start();
        }
    }
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            s = rest.trim_start();
        }
    }
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            s = s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s.to_string()
}

pub fn parse_completion(content: &str) -> Vec<String> {
    content.lines().map(parse_line).filter(|l| !l.is_empty()).collect()
}

/// Chat-completions client for an OpenAI-compatible endpoint.
#[derive(Clone, Debug)]
pub struct LlmHttp {
    config: LlmConfig,
    client: JsonClient,
}

impl LlmHttp {
    pub fn new(config: LlmConfig, limiter: RequestLimiter) -> Result<Self> {
        let client = JsonClient::new(config.timeout, config.retry, limiter)?;
        Ok(LlmHttp { config, client })
    }

    fn complete(&self, prompt: &str, temperature: f64) -> Result<Vec<String>> {
        let req = ChatRequest {
            model: &self.config.model,
            temperature,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            seed: self.config.seed,
        };
        let body = self
            .client
            .post(&self.config.endpoint(), self.config.api_key.as_deref(), &req)?;
        match serde_json::from_str::<ChatResponse>(&body) {
            Ok(resp) => Ok(resp
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .map(|c| parse_completion(&c))
                .unwrap_or_default()),
            Err(e) => {
                log::warn!("unparseable completion response: {e}");
                Ok(Vec::new())
            }
        }
    }
}

impl Rephraser for LlmHttp {
    fn rephrase(&mut self, prompt: &str, count: usize, temperature: f64) -> Result<Vec<String>> {
        let mut got: Vec<String> = Vec::new();
        for attempt in 1..=self.config.max_attempts.max(1) {
            let lines = self.complete(prompt, temperature)?;
            got = clean(got.into_iter().chain(lines), count);
            if got.len() == count {
                return Ok(got);
            }
            log::debug!("attempt {attempt}: {} of {count} usable rephrasings", got.len());
        }
        Err(Error::RephraserFailure(format!(
            "wanted {count} rephrasings, got {} after {} attempts",
            got.len(),
            self.config.max_attempts.max(1)
        )))
    }
}

/// Counts calls and requested rephrasings, and keeps every prompt seen.
#[derive(Debug)]
pub struct Recording<R> {
    inner: R,
    calls: usize,
    requested: usize,
    pub prompts: Vec<String>,
}

impl<R: Rephraser> Recording<R> {
    pub fn new(inner: R) -> Self {
        Recording {
            inner,
            calls: 0,
            requested: 0,
            prompts: Vec::new(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn into_inner(self) -> R {
        self.inner
    }
}

impl<R: Rephraser> Rephraser for Recording<R> {
    fn rephrase(&mut self, prompt: &str, count: usize, temperature: f64) -> Result<Vec<String>> {
        self.calls += 1;
        self.requested += count;
        self.prompts.push(prompt.to_string());
        self.inner.rephrase(prompt, count, temperature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn echo_counter_spans_calls() {
        let mut r = MockEcho::new();
        let prompt = "intro\n\nOriginal query: what causes rain\n\nWrite 2";
        assert_eq!(
            r.rephrase(prompt, 2, 1.0).unwrap(),
            ["what causes rain (v1)", "what causes rain (v2)"]
        );
        assert_eq!(r.rephrase(prompt, 1, 1.0).unwrap(), ["what causes rain (v3)"]);
        assert!(r.rephrase("no query here", 1, 1.0).is_err());
    }

    #[test]
    fn scripted_cycles_and_cleans() {
        let mut r = MockScripted::new(vec![
            vec![" a ".into(), "".into(), "a".into(), "b".into(), "c".into()],
            vec!["z".into()],
        ])
        .unwrap();
        assert_eq!(r.rephrase("", 2, 1.0).unwrap(), ["a", "b"]);
        assert_eq!(r.rephrase("", 3, 1.0).unwrap(), ["z"]);
        assert_eq!(r.rephrase("", 3, 1.0).unwrap(), ["a", "b", "c"]);
        assert!(MockScripted::new(vec![]).is_err());
    }

    #[test]
    fn scripted_from_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[\"x\", \"y\"]\n\n[\"w\"]").unwrap();
        let mut r = MockScripted::from_file(f.path()).unwrap();
        assert_eq!(r.rephrase("", 5, 1.0).unwrap(), ["x", "y"]);
        assert_eq!(r.rephrase("", 5, 1.0).unwrap(), ["w"]);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "{{\"not\": \"a list\"}}").unwrap();
        assert!(matches!(
            MockScripted::from_file(bad.path()),
            Err(Error::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn completion_lines() {
        let content = "1. origin of sars-cov-2\n2) \"bat coronavirus spillover\"\n\n- zoonotic origin\n  plain line  ";
        assert_eq!(
            parse_completion(content),
            [
                "origin of sars-cov-2",
                "bat coronavirus spillover",
                "zoonotic origin",
                "plain line"
            ]
        );
        assert_eq!(parse_completion("2020 covid cases"), ["2020 covid cases"]);
    }

    #[test]
    fn chat_request_shape() {
        let req = ChatRequest {
            model: "m",
            temperature: 1.0,
            messages: [ChatMessage {
                role: "user",
                content: "hi",
            }],
            seed: None,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"model":"m","temperature":1.0,"messages":[{"role":"user","content":"hi"}]}"#
        );
    }

    #[test]
    fn llm_unreachable() {
        let mut cfg = LlmConfig::new("http://127.0.0.1:1/v1/", "m");
        cfg.retry.max_attempts = 1;
        assert_eq!(cfg.endpoint(), "http://127.0.0.1:1/v1/chat/completions");
        let mut r = LlmHttp::new(cfg, RequestLimiter::default()).unwrap();
        assert!(matches!(r.rephrase("p", 1, 1.0), Err(Error::ProviderUnavailable(_))));
    }

    #[test]
    fn recording_counts() {
        let mut r = Recording::new(MockEcho::new());
        r.rephrase("Original query: q", 3, 1.0).unwrap();
        r.rephrase("Original query: q", 1, 1.0).unwrap();
        assert_eq!((r.calls(), r.requested(), r.prompts.len()), (2, 4, 2));
    }
}
