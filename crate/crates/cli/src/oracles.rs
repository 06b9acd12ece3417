use std::path::PathBuf;
use std::sync::Arc;

use mshc_core::oracle::{
    planted_score_law, LsOracle, Memoized, OracleKind, PlantedCircuitSpec, PlantedMode, PlantedOracle, RemoteConfig,
    RemoteSource, ReplaySource, WriteThrough,
};
use mshc_core::{ModelTopology, SeparabilityOracle};

use crate::args::{OracleChoice, PlantedModeChoice, SearchArgs};
use crate::error::CliError;

pub const CACHE_ENV: &str = "MSHC_CACHE_DIR";
const DEFAULT_PLANTED_TOPOLOGY: (usize, usize) = (20, 8);

/// A configured backend; planted oracles are reseeded per trial, the others are shared.
pub enum OracleSetup {
    Planted {
        base: PlantedOracle,
        cache: Option<PathBuf>,
    },
    Shared(Arc<dyn SeparabilityOracle>),
}

pub struct Resolved {
    pub setup: OracleSetup,
    pub kind: OracleKind,
    pub dataset_id: String,
    pub topology: ModelTopology,
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn resolve(args: &SearchArgs) -> Result<Resolved, CliError> {
    match args.oracle {
        OracleChoice::Planted => {
            let (l, h) = DEFAULT_PLANTED_TOPOLOGY;
            let topology = match args.topology {
                Some(t) => t,
                None => ModelTopology::new(l, h).map_err(|e| CliError::Other(e.into()))?,
            };
            let p = &args.planted;
            if *p.planted_layers.end() >= topology.num_layers() {
                return Err(CliError::Usage(format!(
                    "planted layers {}-{} outside topology {topology}",
                    p.planted_layers.start(),
                    p.planted_layers.end()
                )));
            }
            let mut spec = PlantedCircuitSpec::confined(
                topology,
                p.planted_layers.clone(),
                p.planted_count,
                p.planted_saturation,
                args.config.seed,
            )?;
            spec.noise_sd = p.noise_sd;
            let mode = match p.planted_mode {
                PlantedModeChoice::Law => PlantedMode::Law,
                PlantedModeChoice::Embeddings => PlantedMode::embeddings(),
            };
            let dataset_id = args.dataset_id.clone().unwrap_or_else(|| "planted".into());
            let base = PlantedOracle::new(spec.clone(), mode)?.with_dataset_id(dataset_id.clone());
            log::info!(
                "planted circuit of {} heads, saturating at {} (score {:.3})",
                spec.planted.len(),
                spec.k,
                planted_score_law(&spec, spec.k)
            );
            Ok(Resolved {
                setup: OracleSetup::Planted {
                    base,
                    cache: cache_dir(),
                },
                kind: OracleKind::Planted { spec, mode },
                dataset_id,
                topology,
            })
        }
        OracleChoice::Replay => {
            let directory = args
                .replay_dir
                .clone()
                .or_else(cache_dir)
                .ok_or_else(|| CliError::Usage(format!("replay oracle needs --replay-dir or ${CACHE_ENV}")))?;
            let topology = args
                .topology
                .ok_or_else(|| CliError::Usage("replay oracle needs --topology".into()))?;
            let dataset_id = required_dataset(args)?;
            let oracle = Memoized::new(LsOracle::new(ReplaySource::new(directory.clone(), topology)));
            Ok(Resolved {
                setup: OracleSetup::Shared(Arc::new(oracle)),
                kind: OracleKind::Replay { directory },
                dataset_id,
                topology,
            })
        }
        OracleChoice::Remote => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or_else(|| CliError::Usage("remote oracle needs --endpoint".into()))?;
            let dataset_id = required_dataset(args)?;
            let source = RemoteSource::connect(RemoteConfig::new(endpoint.clone()))?;
            let topology = mshc_core::oracle::EmbeddingSource::topology(&source);
            if let Some(expected) = args.topology.filter(|t| *t != topology) {
                return Err(CliError::TopologyMismatch(format!(
                    "--topology {expected} does not match server topology {topology}"
                )));
            }
            if !source.datasets().contains_key(&dataset_id) {
                return Err(CliError::Usage(format!(
                    "server does not register dataset {dataset_id:?}"
                )));
            }
            let oracle: Arc<dyn SeparabilityOracle> = match cache_dir() {
                Some(dir) => Arc::new(Memoized::new(LsOracle::new(WriteThrough::new(source, dir)))),
                None => Arc::new(Memoized::new(LsOracle::new(source))),
            };
            Ok(Resolved {
                setup: OracleSetup::Shared(oracle),
                kind: OracleKind::Remote { endpoint },
                dataset_id,
                topology,
            })
        }
    }
}

fn required_dataset(args: &SearchArgs) -> Result<String, CliError> {
    args.dataset_id
        .clone()
        .ok_or_else(|| CliError::Usage("--dataset-id is required for this oracle".into()))
}

impl OracleSetup {
    /// Oracle for one trial; planted backends draw a fresh sample from `seed`.
    pub fn for_trial(&self, seed: u64) -> Arc<dyn SeparabilityOracle> {
        match self {
            OracleSetup::Shared(o) => o.clone(),
            OracleSetup::Planted { base, cache } => {
                let oracle = base.reseeded(seed);
                match (oracle.mode(), cache) {
                    (PlantedMode::Embeddings { dim, c }, Some(dir)) => Arc::new(Memoized::new(LsOracle::with_params(
                        WriteThrough::new(oracle, dir.clone()),
                        dim,
                        c,
                    ))),
                    (PlantedMode::Embeddings { .. }, None) => Arc::new(Memoized::new(oracle)),
                    (PlantedMode::Law, _) => Arc::new(oracle),
                }
            }
        }
    }
}
