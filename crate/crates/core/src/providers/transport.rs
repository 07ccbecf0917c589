use std::time::Duration;

use serde_json::Value;

/// Failure of a single HTTP exchange.
#[derive(Debug, Clone)]
pub struct TransportError {
    pub message: String,
    /// Timeouts, connection failures, 429 and 5xx are worth retrying.
    pub retryable: bool,
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// JSON-over-HTTP POST. Swappable so tests can inject faults.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| TransportError {
                message: format!("cannot build HTTP client: {e}"),
                retryable: false,
            })?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: e.is_timeout() || e.is_connect() || e.is_request(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(TransportError {
                message: format!("HTTP {status}: {}", text.chars().take(500).collect::<String>()),
                retryable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        resp.json::<Value>().map_err(|e| TransportError {
            message: format!("invalid JSON response: {e}"),
            retryable: false,
        })
    }
}

pub(crate) fn join_url(endpoint: &str, path: &str) -> String {
    format!("{}/{}", endpoint.trim_end_matches('/'), path)
}
