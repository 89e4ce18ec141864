//! Client for an out-of-process classifier speaking JSON over HTTP.
//!
//! ```text
//! POST /v1/sentiment {"text"}           -> {"label", "scores"?: [3]}
//! POST /v1/aspects   {"text", "tokens"} -> {"tags": [...]}   (one tag per token)
//! POST /v1/stance    {"claim", "text"}  -> {"label", "scores"?: [4]}
//! ```
//!
//! HTTP 400 carries `{"error": string}`; any other non-200 status is a
//! protocol error.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    AspectTag, AspectTagging, Capabilities, Capability, ClassifierBackend, ClassifyError,
    Prediction, SentimentLabel, StanceLabel,
};
use crate::corpus::CleanDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:9000`.
    pub endpoint: String,
    pub timeout_secs: f64,
    /// Maximum number of requests in flight (and idle connections kept).
    pub pool_size: usize,
    pub capabilities: Vec<Capability>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            timeout_secs: 30.0,
            pool_size: 4,
            capabilities: vec![Capability::Sentiment, Capability::Aspects, Capability::Stance],
        }
    }
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    name: String,
    base: String,
    timeout: Duration,
    capabilities: Capabilities,
    agent: ureq::Agent,
    gate: Gate,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("name", &self.name)
            .field("base", &self.base)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(name: impl Into<String>, config: &RemoteConfig) -> Self {
        let timeout = Duration::from_secs_f64(config.timeout_secs.max(0.001));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .max_idle_connections(config.pool_size.max(1))
            .max_idle_connections_per_host(config.pool_size.max(1))
            .build()
            .into();
        RemoteBackend {
            name: name.into(),
            base: config.endpoint.trim_end_matches('/').to_string(),
            timeout,
            capabilities: Capabilities::only(&config.capabilities),
            agent,
            gate: Gate::new(config.pool_size),
        }
    }

    fn post(&self, route: &str, body: Value) -> Result<Value, ClassifyError> {
        let _permit = self.gate.enter();
        let url = format!("{}{}", self.base, route);
        let mut response = self.agent.post(&url).send_json(&body).map_err(|e| self.transport(e))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.transport(e))?;
        match status {
            200 => serde_json::from_str(&text)
                .map_err(|e| ClassifyError::Protocol(format!("response is not JSON: {e}"))),
            400 => {
                let message = serde_json::from_str::<Value>(&text)
                    .ok()
                    .and_then(|v| v.get("error").and_then(Value::as_str).map(str::to_string))
                    .ok_or_else(|| ClassifyError::Protocol("400 response without an error string".into()))?;
                Err(ClassifyError::Rejected(message))
            }
            other => Err(ClassifyError::Protocol(format!("unexpected HTTP status {other}"))),
        }
    }

    fn transport(&self, e: ureq::Error) -> ClassifyError {
        match e {
            ureq::Error::Timeout(_) => ClassifyError::Timeout(self.timeout),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                ClassifyError::Timeout(self.timeout)
            }
            other => ClassifyError::Transport(other.to_string()),
        }
    }
}

fn label_field<L: std::str::FromStr>(body: &Value) -> Result<L, ClassifyError> {
    let raw = body
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| ClassifyError::Protocol("response has no string \"label\"".into()))?;
    raw.parse()
        .map_err(|_| ClassifyError::Protocol(format!("unknown label {raw:?}")))
}

fn scores_field(body: &Value, expected: usize) -> Result<Option<Vec<f64>>, ClassifyError> {
    let Some(raw) = body.get("scores") else {
        return Ok(None);
    };
    let scores: Vec<f64> = raw
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .filter(|v: &Vec<f64>| v.len() == raw.as_array().map_or(0, Vec::len))
        .ok_or_else(|| ClassifyError::Protocol("\"scores\" must be an array of numbers".into()))?;
    if scores.len() != expected {
        return Err(ClassifyError::Protocol(format!(
            "expected {expected} scores, got {}",
            scores.len()
        )));
    }
    Ok(Some(scores))
}

/// Decodes a `/v1/sentiment` response body.
pub fn decode_sentiment(body: &Value) -> Result<Prediction<SentimentLabel>, ClassifyError> {
    Ok(Prediction {
        label: label_field(body)?,
        scores: scores_field(body, 3)?,
    })
}

/// Decodes a `/v1/stance` response body.
pub fn decode_stance(body: &Value) -> Result<Prediction<StanceLabel>, ClassifyError> {
    Ok(Prediction {
        label: label_field(body)?,
        scores: scores_field(body, 4)?,
    })
}

/// Decodes a `/v1/aspects` response body against the document's tokens.
pub fn decode_aspects(body: &Value, doc: &CleanDocument) -> Result<AspectTagging, ClassifyError> {
    let raw = body
        .get("tags")
        .and_then(Value::as_array)
        .ok_or_else(|| ClassifyError::Protocol("response has no \"tags\" array".into()))?;
    let tags = raw
        .iter()
        .map(|t| {
            let s = t
                .as_str()
                .ok_or_else(|| ClassifyError::Protocol("non-string tag".into()))?;
            s.parse::<AspectTag>()
                .map_err(|_| ClassifyError::Protocol(format!("unknown tag {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    AspectTagging::from_tags(tags, &doc.tokens())
}

impl ClassifierBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn sentiment(&self, doc: &CleanDocument) -> Result<Prediction<SentimentLabel>, ClassifyError> {
        self.require(Capability::Sentiment)?;
        decode_sentiment(&self.post("/v1/sentiment", json!({ "text": doc.text() }))?)
    }

    fn aspects(&self, doc: &CleanDocument) -> Result<AspectTagging, ClassifyError> {
        self.require(Capability::Aspects)?;
        let body = json!({ "text": doc.text(), "tokens": doc.token_strings() });
        decode_aspects(&self.post("/v1/aspects", body)?, doc)
    }

    fn stance(
        &self,
        claim: &CleanDocument,
        doc: &CleanDocument,
    ) -> Result<Prediction<StanceLabel>, ClassifyError> {
        self.require(Capability::Stance)?;
        decode_stance(&self.post(
            "/v1/stance",
            json!({ "claim": claim.text(), "text": doc.text() }),
        )?)
    }
}
