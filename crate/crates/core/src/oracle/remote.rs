//! HTTP client for an embedding adapter speaking the [`wire`](super::wire) protocol.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

use super::wire::{
    DatasetsResponse, EmbedRequest, EmbedResponse, ErrorResponse, TopologyResponse, DATASETS_PATH, EMBED_PATH,
    TOPOLOGY_PATH,
};
use super::{EmbeddingSource, OracleError, OracleRequest, SingleFlight};
use crate::embeddings::LabeledEmbeddings;
use crate::heads::ModelTopology;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout: Duration,
    /// Retries after the first attempt for transport failures.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            max_in_flight: 4,
        }
    }
}

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(OracleError),
}

pub struct RemoteSource {
    config: RemoteConfig,
    client: Client,
    topology: ModelTopology,
    datasets: HashMap<String, usize>,
    cache: SingleFlight<(String, u64), LabeledEmbeddings>,
    network_calls: AtomicU64,
    gate: Gate,
}

impl RemoteSource {
    /// Fetches topology and dataset registry from the adapter.
    pub fn connect(config: RemoteConfig) -> Result<Self, OracleError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| OracleError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        let gate = Gate {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.max_in_flight.max(1),
        };
        let mut source = Self {
            config,
            client,
            topology: ModelTopology::new(1, 1).expect("placeholder topology"),
            datasets: HashMap::new(),
            cache: SingleFlight::new(),
            network_calls: AtomicU64::new(0),
            gate,
        };
        let topo: TopologyResponse = source.get_json(TOPOLOGY_PATH)?;
        source.topology = ModelTopology::new(topo.num_layers as usize, topo.heads_per_layer as usize)
            .map_err(|e| OracleError::Protocol(format!("topology: {e}")))?;
        let listing: DatasetsResponse = source.get_json(DATASETS_PATH)?;
        source.datasets = listing.datasets.into_iter().map(|d| (d.id, d.n as usize)).collect();
        Ok(source)
    }

    pub fn datasets(&self) -> &HashMap<String, usize> {
        &self.datasets
    }

    /// HTTP requests issued so far, including retries.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::Relaxed)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint, path)
    }

    fn get_json<T: serde::de::DeserializeOwned>(&self, path: &str) -> Result<T, OracleError> {
        self.with_retry(|| {
            let resp = self.client.get(self.url(path)).send().map_err(transport)?;
            parse_ok(resp)
        })
    }

    fn with_retry<T>(&self, mut attempt: impl FnMut() -> Result<T, Failure>) -> Result<T, OracleError> {
        let mut backoff = self.config.initial_backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let result = {
                let _slot = self.gate.acquire();
                self.network_calls.fetch_add(1, Ordering::Relaxed);
                attempt()
            };
            match result {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    if attempts > self.config.max_retries {
                        return Err(OracleError::Transport { attempts, message });
                    }
                    log::warn!("adapter request failed (attempt {attempts}): {message}; retrying in {backoff:?}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }

    /// Embeddings for `request`, fetched once per `(dataset_id, mask_key)`.
    pub fn remote_score(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
        request.check_topology(self.topology)?;
        let expected_rows = *self
            .datasets
            .get(request.dataset_id())
            .ok_or_else(|| OracleError::UnknownDataset(request.dataset_id().to_string()))?;
        self.cache.get_or_try_insert(request.cache_key(), || {
            let body = EmbedRequest::new(request.dataset_id(), request.mask());
            let resp: EmbedResponse = self.with_retry(|| {
                let resp = self
                    .client
                    .post(self.url(EMBED_PATH))
                    .json(&body)
                    .send()
                    .map_err(transport)?;
                parse_ok(resp)
            })?;
            if resp.rows as usize != expected_rows {
                return Err(OracleError::Protocol(format!(
                    "dataset {:?}: expected {expected_rows} rows, got {}",
                    request.dataset_id(),
                    resp.rows
                )));
            }
            let data = resp.decode()?;
            let (pos, neg) = data.label_counts();
            if pos != neg {
                return Err(OracleError::Protocol(format!(
                    "dataset {:?}: labels not balanced ({pos} positive, {neg} negative)",
                    request.dataset_id()
                )));
            }
            Ok(data)
        })
    }
}

fn transport(e: reqwest::Error) -> Failure {
    Failure::Retryable(e.to_string())
}

fn parse_ok<T: serde::de::DeserializeOwned>(resp: Response) -> Result<T, Failure> {
    let status = resp.status();
    if status.is_success() {
        return resp
            .json()
            .map_err(|e| Failure::Fatal(OracleError::Protocol(format!("malformed response body: {e}"))));
    }
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        return Err(Failure::Retryable(format!("HTTP {status}")));
    }
    let body: Option<ErrorResponse> = resp.json().ok();
    Err(Failure::Fatal(match (status, body) {
        (StatusCode::NOT_FOUND, Some(b)) if b.error == "unknown_dataset" => OracleError::UnknownDataset(b.error),
        (StatusCode::UNPROCESSABLE_ENTITY, Some(ErrorResponse { head: Some([l, h]), .. })) => {
            OracleError::Protocol(format!("adapter rejected head L{l}.H{h} as invalid"))
        }
        (status, body) => {
            OracleError::Protocol(format!("HTTP {status}: {}", body.map(|b| b.error).unwrap_or_default()))
        }
    }))
}

impl EmbeddingSource for RemoteSource {
    fn topology(&self) -> ModelTopology {
        self.topology
    }

    fn embeddings(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
        self.remote_score(request)
    }
}
