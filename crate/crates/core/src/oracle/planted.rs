//! Synthetic oracle with a known ground-truth circuit `H*`.
//!
//! With `a` planted heads active the score is
//! `base + (full − base) · min(1, a / k)`; heads outside `H*` never matter.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingSource, OracleError, OracleRequest, SeparabilityOracle};
use crate::embeddings::LabeledEmbeddings;
use crate::heads::{HeadId, HeadMask, ModelTopology};
use crate::lsmetric;

pub const DEFAULT_DATASET_ID: &str = "planted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCircuitSpec {
    pub topology: ModelTopology,
    pub planted: BTreeSet<HeadId>,
    /// Number of active planted heads at which the score saturates.
    pub k: usize,
    pub base_score: f64,
    pub full_score: f64,
    pub noise_sd: f64,
    pub embedding_dim: usize,
    pub examples_per_class: usize,
    pub seed: u64,
    /// Class-mean separation at saturation, in units of the within-class sd.
    pub max_separation: f64,
}

impl PlantedCircuitSpec {
    pub fn new(topology: ModelTopology, planted: BTreeSet<HeadId>, k: usize) -> Self {
        Self {
            topology,
            planted,
            k,
            base_score: 0.5,
            full_score: 1.0,
            noise_sd: 0.0,
            embedding_dim: 256,
            examples_per_class: 50,
            seed: 0,
            max_separation: 8.0,
        }
    }

    /// `count` heads drawn uniformly (seeded) from the heads of `layers`.
    pub fn confined(
        topology: ModelTopology,
        layers: RangeInclusive<usize>,
        count: usize,
        k: usize,
        seed: u64,
    ) -> Result<Self, OracleError> {
        let pool: Vec<HeadId> = layers
            .flat_map(|l| topology.layer_heads(l).collect::<Vec<_>>())
            .collect();
        if pool.len() < count {
            return Err(OracleError::InvalidSpec(format!(
                "cannot plant {count} heads in a pool of {}",
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted = pool.into_iter().choose_multiple(&mut rng, count).into_iter().collect();
        let mut spec = Self::new(topology, planted, k);
        spec.seed = seed;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidSpec(m));
        if !(0.0..=1.0).contains(&self.base_score) || !(self.base_score < self.full_score && self.full_score <= 1.0) {
            return bad(format!(
                "need 0 <= base < full <= 1 (base {}, full {})",
                self.base_score, self.full_score
            ));
        }
        if self.k == 0 || self.planted.len() < self.k {
            return bad(format!(
                "need 1 <= k <= |planted| (k {}, |planted| {})",
                self.k,
                self.planted.len()
            ));
        }
        if let Some(h) = self.planted.iter().find(|h| !self.topology.contains(**h)) {
            return bad(format!("planted head {h} outside topology {}", self.topology));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad(format!("noise_sd must be non-negative, got {}", self.noise_sd));
        }
        if self.embedding_dim == 0 || self.examples_per_class == 0 {
            return bad("embedding_dim and examples_per_class must be positive".into());
        }
        if !(self.max_separation.is_finite() && self.max_separation >= 0.0) {
            return bad(format!(
                "max_separation must be non-negative, got {}",
                self.max_separation
            ));
        }
        Ok(())
    }

    pub fn active_planted(&self, mask: &HeadMask) -> usize {
        self.planted.iter().filter(|h| mask.is_active(**h)).count()
    }

    /// Law value for the configuration described by `mask`.
    pub fn law(&self, mask: &HeadMask) -> f64 {
        planted_score_law(self, self.active_planted(mask))
    }

    /// Digest of the mask restricted to planted heads; all randomness for a
    /// mask is derived from this so non-planted heads are exactly inert.
    fn planted_key(&self, mask: &HeadMask) -> u64 {
        let restricted = mask.disabled().iter().copied().filter(|h| self.planted.contains(h));
        HeadMask::with_disabled(mask.topology(), restricted)
            .map(|m| m.key())
            .unwrap_or_else(|_| mask.key())
    }
}

/// `base + (full − base) · min(1, a / k)`
pub fn planted_score_law(spec: &PlantedCircuitSpec, active_planted: usize) -> f64 {
    let fraction = (active_planted as f64 / spec.k as f64).min(1.0);
    spec.base_score + (spec.full_score - spec.base_score) * fraction
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = a ^ b.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Two unit-variance Gaussian clouds whose mean separation is
/// `max_separation · (law − base) / (full − base)` along a fixed random direction.
/// Rows alternate `+1, −1`.
pub fn planted_embeddings(spec: &PlantedCircuitSpec, mask: &HeadMask) -> LabeledEmbeddings {
    let d = spec.embedding_dim;
    let law = spec.law(mask);
    let separation = spec.max_separation * (law - spec.base_score) / (spec.full_score - spec.base_score);

    let mut dir_rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0xD1EC_7104));
    let mut direction: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut dir_rng)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);

    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, spec.planted_key(mask)));
    let n = 2 * spec.examples_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let shift = f64::from(label) * separation / 2.0;
        for u in &direction {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(shift * u + noise);
        }
        labels.push(label);
    }
    LabeledEmbeddings::new(data, d, labels).expect("generated embeddings are well-formed")
}

/// How the planted oracle turns a mask into a score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PlantedMode {
    /// Law value plus optional Gaussian noise, clamped to `[0, 1]`.
    Law,
    /// Full LS pipeline on [`planted_embeddings`].
    Embeddings { dim: usize, c: f64 },
}

impl PlantedMode {
    pub fn embeddings() -> Self {
        PlantedMode::Embeddings {
            dim: lsmetric::DEFAULT_DIM,
            c: lsmetric::DEFAULT_C,
        }
    }
}

#[derive(Debug)]
pub struct PlantedOracle {
    spec: PlantedCircuitSpec,
    mode: PlantedMode,
    dataset_id: String,
    evaluations: AtomicU64,
}

impl PlantedOracle {
    pub fn new(spec: PlantedCircuitSpec, mode: PlantedMode) -> Result<Self, OracleError> {
        spec.validate()?;
        Ok(Self {
            spec,
            mode,
            dataset_id: DEFAULT_DATASET_ID.to_string(),
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn with_dataset_id(mut self, id: impl Into<String>) -> Self {
        self.dataset_id = id.into();
        self
    }

    pub fn spec(&self) -> &PlantedCircuitSpec {
        &self.spec
    }

    pub fn mode(&self) -> PlantedMode {
        self.mode
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    /// Same circuit with a fresh sample seed (a resampled mini-batch).
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut spec = self.spec.clone();
        spec.seed = seed;
        Self {
            spec,
            mode: self.mode,
            dataset_id: self.dataset_id.clone(),
            evaluations: AtomicU64::new(0),
        }
    }

    fn check(&self, request: &OracleRequest) -> Result<(), OracleError> {
        if request.dataset_id() != self.dataset_id {
            return Err(OracleError::UnknownDataset(request.dataset_id().to_string()));
        }
        request.check_topology(self.spec.topology)
    }
}

impl SeparabilityOracle for PlantedOracle {
    fn topology(&self) -> ModelTopology {
        self.spec.topology
    }

    fn score(&self, request: &OracleRequest) -> Result<f64, OracleError> {
        self.check(request)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        match self.mode {
            PlantedMode::Law => {
                let law = self.spec.law(request.mask());
                if self.spec.noise_sd == 0.0 {
                    return Ok(law);
                }
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix(self.spec.seed ^ 0x004E_015E, self.spec.planted_key(request.mask())));
                let noise: f64 = StandardNormal.sample(&mut rng);
                Ok((law + self.spec.noise_sd * noise).clamp(0.0, 1.0))
            }
            PlantedMode::Embeddings { dim, c } => {
                let data = planted_embeddings(&self.spec, request.mask());
                Ok(lsmetric::ls_score(&data, dim, c)?)
            }
        }
    }

    fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

impl EmbeddingSource for PlantedOracle {
    fn topology(&self) -> ModelTopology {
        self.spec.topology
    }

    fn embeddings(&self, request: &OracleRequest) -> Result<LabeledEmbeddings, OracleError> {
        self.check(request)?;
        Ok(planted_embeddings(&self.spec, request.mask()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec10() -> PlantedCircuitSpec {
        let t = ModelTopology::new(4, 8).unwrap();
        PlantedCircuitSpec::new(t, t.heads().take(10).collect(), 5)
    }

    fn req(spec: &PlantedCircuitSpec, disabled: impl IntoIterator<Item = HeadId>) -> OracleRequest {
        OracleRequest::new(
            DEFAULT_DATASET_ID,
            HeadMask::with_disabled(spec.topology, disabled).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn law_examples() {
        let s = spec10();
        assert_eq!(planted_score_law(&s, 0), 0.5);
        assert_eq!(planted_score_law(&s, 5), 1.0);
        assert_eq!(planted_score_law(&s, 9), 1.0);
        let mut even = s.clone();
        even.k = 4;
        assert_eq!(planted_score_law(&even, 2), 0.75);
    }

    #[test]
    fn law_oracle_examples() {
        let s = spec10();
        let oracle = PlantedOracle::new(s.clone(), PlantedMode::Law).unwrap();
        assert_eq!(oracle.score(&req(&s, [])).unwrap(), 1.0);
        assert_eq!(oracle.score(&req(&s, s.planted.iter().copied())).unwrap(), 0.5);
        // 3 of 10 planted active
        let three = oracle.score(&req(&s, s.planted.iter().copied().skip(3))).unwrap();
        assert!((three - (0.5 + 0.5 * 3.0 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn non_planted_heads_are_inert() {
        let s = spec10();
        let mut noisy = s.clone();
        noisy.noise_sd = 0.05;
        let oracle = PlantedOracle::new(noisy.clone(), PlantedMode::Law).unwrap();
        let base = req(&noisy, noisy.planted.iter().copied().take(7));
        let extra = req(
            &noisy,
            noisy
                .planted
                .iter()
                .copied()
                .take(7)
                .chain(noisy.topology.heads().skip(12).take(9)),
        );
        assert_eq!(oracle.score(&base).unwrap(), oracle.score(&extra).unwrap());
    }

    #[test]
    fn unknown_dataset_and_invalid_spec() {
        let s = spec10();
        let oracle = PlantedOracle::new(s.clone(), PlantedMode::Law).unwrap();
        let other = OracleRequest::new("nope", HeadMask::full(s.topology)).unwrap();
        assert_eq!(oracle.score(&other), Err(OracleError::UnknownDataset("nope".into())));

        let mut bad = s.clone();
        bad.base_score = 1.0;
        assert!(PlantedOracle::new(bad, PlantedMode::Law).is_err());
        let mut bad = s;
        bad.k = 11;
        assert!(PlantedOracle::new(bad, PlantedMode::Law).is_err());
    }

    #[test]
    fn embeddings_are_deterministic() {
        let s = spec10();
        let mask = HeadMask::with_disabled(s.topology, s.planted.iter().copied().take(4)).unwrap();
        let a = planted_embeddings(&s, &mask);
        let b = planted_embeddings(&s, &mask);
        assert_eq!(a.to_emb_bytes(), b.to_emb_bytes());
        assert_eq!(a.rows(), 100);
        assert_eq!(a.cols(), 256);
        assert_eq!(a.label_counts(), (50, 50));
    }

    #[test]
    fn embedding_scores_match_law_at_saturation() {
        // below saturation the 5-d training accuracy overfits (about 0.6 at
        // law 0.5), so only the saturated regime is checked
        let t = ModelTopology::new(20, 8).unwrap();
        for seed in 0..3 {
            let s = PlantedCircuitSpec::confined(t, 7..=9, 12, 3, seed).unwrap();
            for off in [0, 4, 9] {
                let mask = HeadMask::with_disabled(t, s.planted.iter().copied().take(off)).unwrap();
                assert_eq!(s.law(&mask), 1.0);
                let score = lsmetric::ls_score(&planted_embeddings(&s, &mask), 5, 10.0).unwrap();
                assert!((score - 1.0).abs() <= 0.05, "seed {seed}, {off} off: {score}");
            }
        }
    }

    #[test]
    fn confined_spec_stays_in_layers() {
        let t = ModelTopology::new(20, 8).unwrap();
        let s = PlantedCircuitSpec::confined(t, 7..=9, 12, 3, 1).unwrap();
        assert_eq!(s.planted.len(), 12);
        assert!(s.planted.iter().all(|h| (7..=9).contains(&h.layer)));
        assert!(PlantedCircuitSpec::confined(t, 7..=7, 12, 3, 1).is_err());
    }
}
