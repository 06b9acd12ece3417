//! Separability oracles: anything that maps `(dataset, head mask)` to a score in `[0, 1]`.
//!
//! Backends either produce a score directly ([`PlantedOracle`] in law mode)
//! or produce embeddings ([`EmbeddingSource`]) that [`LsOracle`] turns into an
//! LS score locally. [`Memoized`] adds a single-flight cache keyed by
//! `(dataset_id, mask_key)` in front of any oracle.

mod cache;
mod planted;
mod remote;
mod replay;
pub mod wire;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::embeddings::{EmbeddingError, LabeledEmbeddings};
use crate::heads::{HeadError, HeadMask, ModelTopology};
use crate::lsmetric::{self, LsError};

pub use cache::SingleFlight;
pub use planted::{planted_embeddings, planted_score_law, PlantedCircuitSpec, PlantedMode, PlantedOracle};
pub use remote::{RemoteConfig, RemoteSource};
pub use replay::{replay_lookup, replay_path, ReplaySource, WriteThrough};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("dataset id must be non-empty")]
    EmptyDatasetId,
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("fixture not found: expected {path}")]
    NotFound { path: String },
    #[error("mask topology {actual} does not match oracle topology {expected}")]
    TopologyMismatch {
        expected: ModelTopology,
        actual: ModelTopology,
    },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid planted circuit: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Ls(#[from] LsError),
    #[error(transparent)]
    Head(#[from] HeadError),
}

/// One scoring query.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OracleRequest {
    dataset_id: String,
    mask: HeadMask,
}

impl OracleRequest {
    pub fn new(dataset_id: impl Into<String>, mask: HeadMask) -> Result<Self, OracleError> {
        let dataset_id = dataset_id.into();
        if dataset_id.is_empty() {
            return Err(OracleError::EmptyDatasetId);
        }
        Ok(Self { dataset_id, mask })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn mask(&self) -> &HeadMask {
        &self.mask
    }

    pub fn cache_key(&self) -> (String, u64) {
        (self.dataset_id.clone(), self.mask.key())
    }

    pub(crate) fn check_topology(&self, expected: ModelTopology) -> Result<(), OracleError> {
        let actual = self.mask.topology();
        if actual != expected {
            return Err(OracleError::TopologyMismatch { expected, actual });
        }
        Ok(())
    }
}

pub trait SeparabilityOracle: Send + Sync {
    fn topology(&self) -> ModelTopology;

    fn score(&self, request: &OracleRequest) -> Result<f64, OracleError>;

    /// Underlying (uncached) evaluations performed so far.
    fn evaluations(&self) -> u64 {
        0
    }
}

pub trait EmbeddingSource: Send + Sync {
    fn topology(&self) -> ModelTopology;

    fn embeddings(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError>;
}

impl<T: SeparabilityOracle + ?Sized> SeparabilityOracle for &T {
    fn topology(&self) -> ModelTopology {
        (**self).topology()
    }
    fn score(&self, request: &OracleRequest) -> Result<f64, OracleError> {
        (**self).score(request)
    }
    fn evaluations(&self) -> u64 {
        (**self).evaluations()
    }
}

impl<T: SeparabilityOracle + ?Sized> SeparabilityOracle for Arc<T> {
    fn topology(&self) -> ModelTopology {
        (**self).topology()
    }
    fn score(&self, request: &OracleRequest) -> Result<f64, OracleError> {
        (**self).score(request)
    }
    fn evaluations(&self) -> u64 {
        (**self).evaluations()
    }
}

impl<T: SeparabilityOracle + ?Sized> SeparabilityOracle for Box<T> {
    fn topology(&self) -> ModelTopology {
        (**self).topology()
    }
    fn score(&self, request: &OracleRequest) -> Result<f64, OracleError> {
        (**self).score(request)
    }
    fn evaluations(&self) -> u64 {
        (**self).evaluations()
    }
}

impl<T: EmbeddingSource + ?Sized> EmbeddingSource for &T {
    fn topology(&self) -> ModelTopology {
        (**self).topology()
    }
    fn embeddings(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
        (**self).embeddings(request)
    }
}

impl<T: EmbeddingSource + ?Sized> EmbeddingSource for Box<T> {
    fn topology(&self) -> ModelTopology {
        (**self).topology()
    }
    fn embeddings(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
        (**self).embeddings(request)
    }
}

/// Scores a mask by running the LS pipeline on embeddings from `S`.
///
/// The projection is refit for every mask.
#[derive(Debug)]
pub struct LsOracle<S> {
    source: S,
    dim: usize,
    c: f64,
    evaluations: AtomicU64,
}

impl<S: EmbeddingSource> LsOracle<S> {
    pub fn new(source: S) -> Self {
        Self::with_params(source, lsmetric::DEFAULT_DIM, lsmetric::DEFAULT_C)
    }

    pub fn with_params(source: S, dim: usize, c: f64) -> Self {
        Self {
            source,
            dim,
            c,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn source(&self) -> &S {
        &self.source
    }
}

impl<S: EmbeddingSource> SeparabilityOracle for LsOracle<S> {
    fn topology(&self) -> ModelTopology {
        self.source.topology()
    }

    fn score(&self, request: &OracleRequest) -> Result<f64, OracleError> {
        request.check_topology(self.topology())?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let data = self.source.embeddings(request)?;
        Ok(lsmetric::ls_score(&data, self.dim, self.c)?)
    }

    fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// In-memory memoization of scores; concurrent requests for one key run the
/// inner oracle once. Errors are not cached.
pub struct Memoized<O> {
    inner: O,
    cache: SingleFlight<(String, u64), f64>,
    evaluations: AtomicU64,
}

impl<O: SeparabilityOracle> Memoized<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            cache: SingleFlight::new(),
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }
}

impl<O: SeparabilityOracle> SeparabilityOracle for Memoized<O> {
    fn topology(&self) -> ModelTopology {
        self.inner.topology()
    }

    fn score(&self, request: &OracleRequest) -> Result<f64, OracleError> {
        request.check_topology(self.topology())?;
        self.cache.get_or_try_insert(request.cache_key(), || {
            self.evaluations.fetch_add(1, Ordering::Relaxed);
            self.inner.score(request)
        })
    }

    fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// Which backend a run used; recorded in run manifests.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    Planted {
        spec: PlantedCircuitSpec,
        mode: PlantedMode,
    },
    Replay {
        directory: PathBuf,
    },
    Remote {
        endpoint: String,
    },
}
