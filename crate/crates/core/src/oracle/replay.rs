//! Fixture-backed embeddings laid out as `<dir>/<dataset_id>/<mask_key:016x>.emb`.

use std::path::{Path, PathBuf};

use super::{EmbeddingSource, OracleError, OracleRequest};
use crate::embeddings::{EmbeddingError, LabeledEmbeddings};
use crate::heads::ModelTopology;

pub fn replay_path(dir: &Path, dataset_id: &str, key: u64) -> PathBuf {
    dir.join(dataset_id).join(format!("{key:016x}.emb"))
}

pub fn replay_lookup(dir: &Path, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
    let path = replay_path(dir, request.dataset_id(), request.mask().key());
    if !path.is_file() {
        return Err(OracleError::NotFound {
            path: path.display().to_string(),
        });
    }
    LabeledEmbeddings::read_emb(&path).map_err(|e| match e {
        EmbeddingError::Format { offset, message } => OracleError::Embedding(EmbeddingError::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        }),
        other => other.into(),
    })
}

#[derive(Debug, Clone)]
pub struct ReplaySource {
    dir: PathBuf,
    topology: ModelTopology,
}

impl ReplaySource {
    pub fn new(dir: impl Into<PathBuf>, topology: ModelTopology) -> Self {
        Self {
            dir: dir.into(),
            topology,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl EmbeddingSource for ReplaySource {
    fn topology(&self) -> ModelTopology {
        self.topology
    }

    fn embeddings(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
        request.check_topology(self.topology)?;
        replay_lookup(&self.dir, request)
    }
}

/// Stores every embedding fetched from `inner` in replay layout under `dir`.
#[derive(Debug)]
pub struct WriteThrough<S> {
    inner: S,
    dir: PathBuf,
}

impl<S> WriteThrough<S> {
    pub fn new(inner: S, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: EmbeddingSource> EmbeddingSource for WriteThrough<S> {
    fn topology(&self) -> ModelTopology {
        self.inner.topology()
    }

    fn embeddings(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
        let data = self.inner.embeddings(request)?;
        let path = replay_path(&self.dir, request.dataset_id(), request.mask().key());
        if !path.exists() {
            data.write_emb(&path)?;
        }
        Ok(data)
    }
}
