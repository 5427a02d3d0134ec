//! Minimal JSON-over-HTTP client shared by the generation harness and the
//! augmentation endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("connection: {0}")]
    Connection(String),
    #[error("bad response: {0}")]
    Decode(String),
}

/// A remote model endpoint. The credential, if any, is read from the named
/// environment variable at request time and sent as a bearer token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default)]
    pub route: String,
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout_secs() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Endpoint {
            url: url.into(),
            route: String::new(),
            credential_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_retries(),
        }
    }

    pub fn full_url(&self) -> String {
        if self.route.is_empty() {
            self.url.clone()
        } else {
            format!(
                "{}/{}",
                self.url.trim_end_matches('/'),
                self.route.trim_start_matches('/')
            )
        }
    }

    /// One POST without retries.
    pub fn post_json(&self, body: &Value) -> Result<Value, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(self.timeout_secs)))
            .build()
            .into();
        let mut req = agent.post(&self.full_url());
        if let Some(var) = &self.credential_env {
            if let Ok(token) = std::env::var(var) {
                req = req.header("Authorization", format!("Bearer {token}"));
            }
        }
        let mut resp = req.send_json(body).map_err(map_error)?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| TransportError::Decode(e.to_string()))
    }

    /// POST with up to `max_retries` retries; returns the value and the
    /// number of retries used.
    pub fn post_json_retrying(&self, body: &Value) -> Result<(Value, u32), TransportError> {
        with_retries(self.max_retries, || self.post_json(body))
    }
}

fn map_error(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::StatusCode(code) => TransportError::Status(code),
        other => TransportError::Connection(other.to_string()),
    }
}

/// Run `f` until it succeeds or `max_retries` retries are exhausted.
/// Returns the value and the number of retries used.
pub fn with_retries<T>(
    max_retries: u32,
    mut f: impl FnMut() -> Result<T, TransportError>,
) -> Result<(T, u32), TransportError> {
    let mut retries = 0;
    loop {
        match f() {
            Ok(v) => return Ok((v, retries)),
            Err(e) if retries < max_retries => {
                log::debug!("transport error, retrying: {e}");
                retries += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
