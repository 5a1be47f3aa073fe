use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::score::{QeItem, QeScore, QeScorer};
use super::wire::{ScoreRequest, ScoreResponse, WireItem, REQUEST_ID_HEADER, SCORE_PATH};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    /// e.g. `http://127.0.0.1:8080`
    pub url: String,
    pub max_batch: usize,
    pub in_flight: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            url: "http://127.0.0.1:8080".into(),
            max_batch: 256,
            in_flight: 4,
            max_attempts: 5,
            backoff_ms: 20,
            timeout_ms: 30_000,
        }
    }
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_batch == 0 || self.in_flight == 0 || self.max_attempts == 0 {
            return Err(Error::config(
                "remote scorer needs max_batch, in_flight and max_attempts ≥ 1",
            ));
        }
        Ok(())
    }
}

/// HTTP client for a remote QE service.
///
/// Large requests are split into batches of at most `max_batch` items, sent
/// over up to `in_flight` concurrent connections and reassembled in request
/// order. Connection failures, 429 and 5xx are retried with exponential
/// backoff; every request is idempotent.
pub struct RemoteScorer {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    next_id: AtomicU64,
    retries: AtomicU64,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::config(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteScorer {
            config,
            client,
            next_id: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        })
    }

    /// Total retries performed so far.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::SeqCst)
    }

    fn url(&self) -> String {
        format!("{}{}", self.config.url.trim_end_matches('/'), SCORE_PATH)
    }

    fn attempt(
        &self,
        body: &ScoreRequest,
        request_id: &str,
    ) -> std::result::Result<Vec<QeScore>, Attempt> {
        let resp = self
            .client
            .post(self.url())
            .header(REQUEST_ID_HEADER, request_id)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(Error::Protocol(format!(
                "HTTP {status}: {text}"
            ))));
        }
        let echoed = resp
            .headers()
            .get(REQUEST_ID_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        if echoed.as_deref() != Some(request_id) {
            return Err(Attempt::Fatal(Error::Protocol(format!(
                "request id {request_id} echoed as {echoed:?}"
            ))));
        }
        let bytes = resp.bytes().map_err(|e| Attempt::Retry(e.to_string()))?;
        let parsed: ScoreResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Attempt::Fatal(Error::Protocol(format!("malformed response: {e}"))))?;
        if parsed.scores.len() != body.items.len() {
            return Err(Attempt::Fatal(Error::Protocol(format!(
                "{} scores for {} items",
                parsed.scores.len(),
                body.items.len()
            ))));
        }
        parsed
            .scores
            .into_iter()
            .map(|s| {
                QeScore::new(s).map_err(|_| Error::Protocol(format!("score {s} outside [0, 1]")))
            })
            .collect::<Result<_>>()
            .map_err(Attempt::Fatal)
    }

    fn send_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>> {
        let body = ScoreRequest {
            items: items.iter().map(WireItem::from).collect(),
        };
        let request_id = format!("dqo-{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, &request_id) {
                Ok(s) => {
                    debug!(
                        "request {request_id}: {} items in {attempts} attempt(s)",
                        items.len()
                    );
                    return Ok(s);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(detail)) => {
                    if attempts >= self.config.max_attempts {
                        return Err(Error::Transport { attempts, detail });
                    }
                    self.retries.fetch_add(1, Ordering::SeqCst);
                    let wait = self
                        .config
                        .backoff_ms
                        .saturating_mul(1 << (attempts - 1).min(16));
                    warn!("request {request_id} attempt {attempts} failed ({detail}); retrying in {wait} ms");
                    thread::sleep(Duration::from_millis(wait));
                }
            }
        }
    }
}

impl QeScorer for RemoteScorer {
    fn score_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>> {
        let chunks: Vec<&[QeItem]> = items.chunks(self.config.max_batch).collect();
        if chunks.len() <= 1 {
            return chunks
                .first()
                .map_or(Ok(Vec::new()), |c| self.send_batch(c));
        }
        let results: Mutex<Vec<Option<Result<Vec<QeScore>>>>> =
            Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicU64::new(0);
        thread::scope(|s| {
            for _ in 0..self.config.in_flight.min(chunks.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst) as usize;
                    if i >= chunks.len() {
                        break;
                    }
                    let r = self.send_batch(chunks[i]);
                    results.lock().expect("results lock")[i] = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(items.len());
        for r in results.into_inner().expect("results lock") {
            out.extend(r.expect("every chunk answered")?);
        }
        Ok(out)
    }
}
