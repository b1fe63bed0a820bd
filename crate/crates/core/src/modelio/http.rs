//! Live HTTP client for chat-completions endpoints, with exponential-backoff
//! retries over a pluggable transport.
//!
//! The wire shape is the de-facto chat-completions JSON: a single user
//! message carrying one base64 PNG part and one text part (or plain text
//! with a system message for extractor queries), temperature pinned to 0.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{CellMeta, ChatClient, ChatRequest, ModelEndpoint};
use crate::error::{Error, Result};

/// How a single send attempt failed.
#[derive(Debug, Clone)]
pub enum TransportFailure {
    /// Worth retrying: connection trouble or HTTP 5xx.
    Transient(String),
    /// Not worth retrying: HTTP 4xx with a body excerpt.
    Permanent { status: u16, body_excerpt: String },
}

/// One send attempt, no retry logic.
pub trait Transport: Sync {
    fn send(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
    ) -> std::result::Result<String, TransportFailure>;
}

/// Sends with retries: transient failures back off exponentially from the
/// endpoint's base, permanent failures surface immediately.
pub fn query_with_retry(
    transport: &dyn Transport,
    endpoint: &ModelEndpoint,
    request: &ChatRequest,
) -> Result<String> {
    let attempts = endpoint.retry.max_attempts.max(1);
    let mut last_failure = String::new();
    for attempt in 1..=attempts {
        match transport.send(endpoint, request) {
            Ok(text) => return Ok(text),
            Err(TransportFailure::Permanent {
                status,
                body_excerpt,
            }) => {
                return Err(Error::Endpoint {
                    status,
                    body_excerpt,
                })
            }
            Err(TransportFailure::Transient(reason)) => {
                last_failure = reason;
                if attempt < attempts {
                    let backoff = endpoint
                        .retry
                        .base_backoff_ms
                        .saturating_mul(1 << (attempt - 1));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        }
    }
    Err(Error::Transport {
        attempts,
        reason: last_failure,
    })
}

/// ureq-backed transport speaking the chat-completions shape.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        HttpTransport {
            agent: ureq::Agent::new_with_config(config),
        }
    }

    fn body(endpoint: &ModelEndpoint, request: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({ "role": "system", "content": system }));
        }
        let user_content = match &request.image_png {
            Some(image) => {
                let encoded = base64::engine::general_purpose::STANDARD.encode(image);
                json!([
                    { "type": "text", "text": request.prompt },
                    {
                        "type": "image_url",
                        "image_url": { "url": format!("data:image/png;base64,{encoded}") }
                    }
                ])
            }
            None => json!(request.prompt),
        };
        messages.push(json!({ "role": "user", "content": user_content }));
        json!({
            "model": endpoint.model_name,
            "temperature": 0,
            "messages": messages,
        })
    }

    fn api_key(endpoint: &ModelEndpoint) -> Result<Option<String>> {
        match &endpoint.api_key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(Error::Config(format!(
                    "model '{}' requires credential environment variable '{var}'",
                    endpoint.id
                ))),
            },
        }
    }
}

impl Transport for HttpTransport {
    fn send(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
    ) -> std::result::Result<String, TransportFailure> {
        // Credential presence is checked by the client before any attempt;
        // re-resolving here keeps the transport self-contained.
        let key = match Self::api_key(endpoint) {
            Ok(key) => key,
            Err(e) => return Err(TransportFailure::Transient(e.to_string())),
        };
        let mut builder = self.agent.post(&endpoint.base_url);
        if let Some(key) = key {
            builder = builder.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = builder
            .send_json(Self::body(endpoint, request))
            .map_err(|e| TransportFailure::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportFailure::Transient(e.to_string()))?;
        if (400..500).contains(&status) {
            let mut excerpt = text;
            excerpt.truncate(400);
            return Err(TransportFailure::Permanent {
                status,
                body_excerpt: excerpt,
            });
        }
        if status >= 500 {
            let mut excerpt = text;
            excerpt.truncate(200);
            return Err(TransportFailure::Transient(format!(
                "HTTP {status}: {excerpt}"
            )));
        }
        extract_assistant_text(&text).map_err(|e| TransportFailure::Transient(e.to_string()))
    }
}

fn extract_assistant_text(body: &str) -> Result<String> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| Error::Validation(format!("unparseable endpoint reply: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Validation("endpoint reply lacks choices[0].message.content".into()))
}

/// The live client: credential precheck, then retrying sends.
pub struct HttpClient<T: Transport = HttpTransport> {
    transport: T,
}

impl Default for HttpClient<HttpTransport> {
    fn default() -> Self {
        HttpClient {
            transport: HttpTransport::default(),
        }
    }
}

impl<T: Transport> HttpClient<T> {
    pub fn with_transport(transport: T) -> Self {
        HttpClient { transport }
    }
}

impl<T: Transport> ChatClient for HttpClient<T> {
    fn query(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
        _cell: &CellMeta<'_>,
    ) -> Result<String> {
        // Missing credentials fail before any network traffic.
        HttpTransport::api_key(endpoint)?;
        query_with_retry(&self.transport, endpoint, request)
    }
}
