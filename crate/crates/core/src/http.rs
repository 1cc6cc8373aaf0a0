//! Blocking JSON-over-HTTP with bounded retries and a shared in-flight cap,
//! used by the embedding service provider and the chat-completions
//! rephraser.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff before attempt `attempt + 1` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32 << attempt.min(16))
            .min(self.max_delay)
    }
}

/// Counting semaphore bounding concurrent requests across all clones.
#[derive(Clone, Debug)]
pub struct RequestLimiter {
    state: Arc<(Mutex<usize>, Condvar)>,
    max_in_flight: usize,
}

pub struct Permit<'a> {
    limiter: &'a RequestLimiter,
}

impl RequestLimiter {
    pub fn new(max_in_flight: usize) -> Self {
        RequestLimiter {
            state: Arc::new((Mutex::new(0), Condvar::new())),
            max_in_flight: max_in_flight.max(1),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let (lock, cvar) = &*self.state;
        let mut in_flight = lock.lock().unwrap();
        while *in_flight >= self.max_in_flight {
            in_flight = cvar.wait(in_flight).unwrap();
        }
        *in_flight += 1;
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.state.0.lock().unwrap()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let (lock, cvar) = &*self.limiter.state;
        *lock.lock().unwrap() -= 1;
        cvar.notify_one();
    }
}

impl Default for RequestLimiter {
    fn default() -> Self {
        RequestLimiter::new(4)
    }
}

#[derive(Clone, Debug)]
pub struct JsonClient {
    client: Client,
    pub retry: RetryPolicy,
    pub limiter: RequestLimiter,
}

impl JsonClient {
    pub fn new(timeout: Duration, retry: RetryPolicy, limiter: RequestLimiter) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::ProviderUnavailable(format!("http client: {e}")))?;
        Ok(JsonClient { client, retry, limiter })
    }

    /// POSTs `body` and returns the response text. Connection failures, 429
    /// and 5xx responses are retried; other statuses fail immediately.
    pub fn post<B: Serialize>(&self, url: &str, bearer: Option<&str>, body: &B) -> Result<String> {
        let mut last_error = String::new();
        for attempt in 0..self.retry.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            let _permit = self.limiter.acquire();
            let mut req = self.client.post(url).json(body);
            if let Some(token) = bearer.filter(|t| !t.is_empty()) {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return Ok(text);
                    }
                    last_error = format!("{url}: HTTP {status}: {}", truncate(&text, 200));
                    if !retryable(status) {
                        break;
                    }
                }
                Err(e) => last_error = format!("{url}: {e}"),
            }
            log::debug!("attempt {} failed: {last_error}", attempt + 1);
        }
        Err(Error::ProviderUnavailable(last_error))
    }
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
