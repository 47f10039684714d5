//! Blocking JSON-over-HTTP transport for the remote providers.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;

use crate::retry::{InFlightLimit, RetryPolicy};

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl Endpoint {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            url: url.into(),
            api_key,
            timeout: Duration::from_secs(60),
        }
    }

    /// Reads the URL and bearer token from the named environment variables.
    pub fn from_env(url_var: &str, key_var: &str) -> Option<Self> {
        let url = std::env::var(url_var).ok().filter(|u| !u.trim().is_empty())?;
        let key = std::env::var(key_var).ok().filter(|k| !k.is_empty());
        Some(Self::new(url, key))
    }
}

#[derive(Debug)]
pub(crate) enum HttpFailure {
    /// Transport error, timeout, 429 or 5xx.
    Transient(String),
    /// Any other non-success status.
    Rejected(String),
    /// 2xx with a body that is not JSON.
    BadBody(String),
}

impl HttpFailure {
    fn retryable(&self) -> bool {
        matches!(self, Self::Transient(_))
    }
}

pub(crate) struct JsonPoster {
    client: Client,
    endpoint: Endpoint,
    retry: RetryPolicy,
    limit: InFlightLimit,
}

impl JsonPoster {
    pub fn new(endpoint: Endpoint, retry: RetryPolicy, max_in_flight: usize) -> Result<Self, String> {
        let client = Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            client,
            endpoint,
            retry,
            limit: InFlightLimit::new(max_in_flight),
        })
    }

    pub fn url(&self) -> &str {
        &self.endpoint.url
    }

    pub fn max_in_flight(&self) -> usize {
        self.limit.cap()
    }

    /// POSTs `body` with retries. On failure returns the last error and the
    /// number of attempts made.
    pub fn post<B: Serialize>(&self, body: &B) -> Result<serde_json::Value, (HttpFailure, u32)> {
        self.limit
            .run(|| self.retry.run(|_| self.post_once(body), HttpFailure::retryable))
    }

    fn post_once<B: Serialize>(&self, body: &B) -> Result<serde_json::Value, HttpFailure> {
        let mut req = self.client.post(&self.endpoint.url).json(body);
        if let Some(key) = &self.endpoint.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| HttpFailure::Transient(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(HttpFailure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(HttpFailure::Rejected(format!(
                "HTTP {status}: {}",
                truncate(&text, 200)
            )));
        }
        let text = resp.text().map_err(|e| HttpFailure::Transient(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| HttpFailure::BadBody(e.to_string()))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
