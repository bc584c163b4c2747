//! Model-endpoint transport shared by the remote verifier and the remote
//! annotator.
//!
//! Request body (JSON object, keys in this order):
//!
//! ```text
//! {"idempotency_key": "<transition id>",
//!  "task": "verify" | "annotate",
//!  "prompt": "<text>",
//!  "images": [{"role": "pre_marked", "width": 256, "height": 512,
//!              "encoding": "gray8-base64", "data": "<base64 pixels>"}, ...]}
//! ```
//!
//! The response body is the model's raw text output. The endpoint URL and
//! bearer token come from environment variables named in [`EndpointConfig`].

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Raster;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("transient endpoint failure: {0}")]
    Transient(String),
    #[error("endpoint failure: {0}")]
    Fatal(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub role: String,
    pub width: u32,
    pub height: u32,
    pub encoding: String,
    pub data: String,
}

impl ImagePayload {
    pub fn from_raster(role: &str, r: &Raster) -> Self {
        Self {
            role: role.to_string(),
            width: r.width(),
            height: r.height(),
            encoding: "gray8-base64".to_string(),
            data: base64::engine::general_purpose::STANDARD.encode(r.pixels()),
        }
    }

    pub fn to_raster(&self) -> Option<Raster> {
        let px = base64::engine::general_purpose::STANDARD.decode(&self.data).ok()?;
        Raster::from_pixels(self.width, self.height, px).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub idempotency_key: String,
    pub task: String,
    pub prompt: String,
    pub images: Vec<ImagePayload>,
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ModelRequest) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &ModelRequest) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, request: &ModelRequest) -> Result<String, TransportError> {
        (**self).send(request)
    }
}

/// Sends with up to `max_retries` retries on transient failures.
pub fn send_with_retries(
    transport: &dyn Transport,
    request: &ModelRequest,
    max_retries: u32,
) -> Result<String, TransportError> {
    let mut attempt = 0;
    loop {
        match transport.send(request) {
            Err(TransportError::Transient(msg)) if attempt < max_retries => {
                tracing::debug!(key = %request.idempotency_key, attempt, "retrying: {msg}");
                attempt += 1;
            }
            other => return other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Environment variable holding the endpoint URL.
    pub url_env: String,
    /// Environment variable holding the bearer token (optional at runtime).
    pub token_env: String,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl EndpointConfig {
    pub fn with_prefix(prefix: &str) -> Self {
        Self {
            url_env: format!("{prefix}_URL"),
            token_env: format!("{prefix}_TOKEN"),
            max_retries: 3,
            max_in_flight: 8,
            timeout_secs: 60,
        }
    }
}

/// Blocking HTTP transport; POSTs the request JSON to the configured URL.
#[cfg(feature = "remote")]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
}

#[cfg(feature = "remote")]
impl HttpTransport {
    pub fn from_env(cfg: &EndpointConfig) -> Result<Self, TransportError> {
        let url = std::env::var(&cfg.url_env)
            .map_err(|_| TransportError::Fatal(format!("{} is not set", cfg.url_env)))?;
        let token = std::env::var(&cfg.token_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| TransportError::Fatal(e.to_string()))?;
        Ok(Self { client, url, token })
    }
}

#[cfg(feature = "remote")]
impl Transport for HttpTransport {
    fn send(&self, request: &ModelRequest) -> Result<String, TransportError> {
        let body = serde_json::to_vec(request).map_err(|e| TransportError::Fatal(e.to_string()))?;
        let mut req = self
            .client
            .post(&self.url)
            .header("Content-Type", "application/json")
            .header("Idempotency-Key", &request.idempotency_key)
            .body(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(TransportError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(format!("HTTP {status}")));
        }
        resp.text().map_err(|e| TransportError::Transient(e.to_string()))
    }
}

/// Extracts the body of the single `<tag>…</tag>` element in `text`.
/// `None` when the tag is missing, repeated, or unterminated.
pub fn extract_tag<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)?;
    if text[start + open.len()..].contains(&open) {
        return None;
    }
    let body_start = start + open.len();
    let end = text[body_start..].find(&close)? + body_start;
    if text[end + close.len()..].contains(&close) {
        return None;
    }
    Some(&text[body_start..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        fail_first: u32,
        calls: AtomicU32,
    }

    impl Transport for Flaky {
        fn send(&self, _r: &ModelRequest) -> Result<String, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(TransportError::Transient("busy".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    fn req() -> ModelRequest {
        ModelRequest {
            idempotency_key: "k".into(),
            task: "verify".into(),
            prompt: "p".into(),
            images: vec![],
        }
    }

    #[test]
    fn retries_transient_failures_up_to_limit() {
        let t = Flaky { fail_first: 2, calls: AtomicU32::new(0) };
        assert_eq!(send_with_retries(&t, &req(), 2).unwrap(), "ok");
        let t = Flaky { fail_first: 3, calls: AtomicU32::new(0) };
        assert!(send_with_retries(&t, &req(), 2).is_err());
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn image_payload_round_trip() {
        let r = Raster::from_fn(4, 3, |x, y| (x * 3 + y) as u8);
        let p = ImagePayload::from_raster("pre", &r);
        assert_eq!(p.to_raster().unwrap(), r);
    }

    #[test]
    fn tag_extraction() {
        assert_eq!(extract_tag("x<score>1</score>y", "score"), Some("1"));
        assert_eq!(extract_tag("<score>1</score><score>0</score>", "score"), None);
        assert_eq!(extract_tag("<score>1", "score"), None);
        assert_eq!(extract_tag("nothing", "score"), None);
    }
}
