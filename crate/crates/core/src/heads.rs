//! Attention-head universe: topology, head addressing, ablation masks and circuits.
//!
//! A [`HeadMask`] stores the set of *disabled* heads; every other head of the
//! topology is active. The empty mask is the full model.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// FNV-1a 64-bit offset basis.
pub const FNV_OFFSET_BASIS: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeadError {
    #[error("invalid head {head} for topology {topology}")]
    InvalidHead { head: HeadId, topology: ModelTopology },
    #[error("flat index {index} out of range for topology {topology}")]
    InvalidFlatIndex { index: usize, topology: ModelTopology },
    #[error("topology must have at least one layer and one head per layer")]
    EmptyTopology,
    #[error("cannot parse {0:?}")]
    Parse(String),
    #[error("circuit has {size} heads, fewer than K = {k}")]
    CircuitTooSmall { size: usize, k: usize },
    #[error("epsilon {0} outside [0, 1]")]
    Epsilon(f64),
}

/// Layer count and heads per layer of a transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelTopology {
    num_layers: usize,
    heads_per_layer: usize,
}

impl ModelTopology {
    pub fn new(num_layers: usize, heads_per_layer: usize) -> Result<Self, HeadError> {
        if num_layers == 0 || heads_per_layer == 0 {
            return Err(HeadError::EmptyTopology);
        }
        Ok(Self {
            num_layers,
            heads_per_layer,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn heads_per_layer(&self) -> usize {
        self.heads_per_layer
    }

    pub fn total_heads(&self) -> usize {
        self.num_layers * self.heads_per_layer
    }

    pub fn contains(&self, id: HeadId) -> bool {
        id.layer < self.num_layers && id.head < self.heads_per_layer
    }

    pub fn validate(&self, id: HeadId) -> Result<HeadId, HeadError> {
        if self.contains(id) {
            Ok(id)
        } else {
            Err(HeadError::InvalidHead {
                head: id,
                topology: *self,
            })
        }
    }

    /// Canonical flat index `layer * heads_per_layer + head`.
    pub fn flat_index(&self, id: HeadId) -> Result<usize, HeadError> {
        self.validate(id)?;
        Ok(id.layer * self.heads_per_layer + id.head)
    }

    pub fn head_at(&self, index: usize) -> Result<HeadId, HeadError> {
        if index >= self.total_heads() {
            return Err(HeadError::InvalidFlatIndex { index, topology: *self });
        }
        Ok(HeadId::new(index / self.heads_per_layer, index % self.heads_per_layer))
    }

    /// All heads in canonical order.
    pub fn heads(&self) -> impl Iterator<Item = HeadId> + '_ {
        (0..self.num_layers).flat_map(move |layer| (0..self.heads_per_layer).map(move |head| HeadId::new(layer, head)))
    }

    pub fn layer_heads(&self, layer: usize) -> impl Iterator<Item = HeadId> + '_ {
        let hpl = if layer < self.num_layers {
            self.heads_per_layer
        } else {
            0
        };
        (0..hpl).map(move |head| HeadId::new(layer, head))
    }
}

impl fmt::Display for ModelTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.num_layers, self.heads_per_layer)
    }
}

/// Parses the `LxH` form, e.g. `20x8`.
impl FromStr for ModelTopology {
    type Err = HeadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (l, h) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| HeadError::Parse(s.to_string()))?;
        let l = l.parse().map_err(|_| HeadError::Parse(s.to_string()))?;
        let h = h.parse().map_err(|_| HeadError::Parse(s.to_string()))?;
        Self::new(l, h)
    }
}

/// One attention head, addressed by `(layer, head)`. Text form `L<layer>.H<head>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub const fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}.H{}", self.layer, self.head)
    }
}

impl FromStr for HeadId {
    type Err = HeadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || HeadError::Parse(s.to_string());
        let rest = s.trim().strip_prefix('L').ok_or_else(err)?;
        let (layer, head) = rest.split_once(".H").ok_or_else(err)?;
        Ok(HeadId::new(
            layer.parse().map_err(|_| err())?,
            head.parse().map_err(|_| err())?,
        ))
    }
}

impl Serialize for HeadId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HeadId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A model configuration: the topology plus the set of disabled heads.
///
/// Equality and hashing only look at the (ordered) disabled set, so two masks
/// built in different orders compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeadMask {
    topology: ModelTopology,
    disabled: BTreeSet<HeadId>,
}

impl HeadMask {
    /// The full model `M`.
    pub fn full(topology: ModelTopology) -> Self {
        Self {
            topology,
            disabled: BTreeSet::new(),
        }
    }

    pub fn with_disabled<I>(topology: ModelTopology, disabled: I) -> Result<Self, HeadError>
    where
        I: IntoIterator<Item = HeadId>,
    {
        let disabled = disabled
            .into_iter()
            .map(|h| topology.validate(h))
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(Self { topology, disabled })
    }

    /// Mask whose active heads are exactly `active`.
    pub fn with_active<'a, I>(topology: ModelTopology, active: I) -> Result<Self, HeadError>
    where
        I: IntoIterator<Item = &'a HeadId>,
    {
        let active = active
            .into_iter()
            .map(|&h| topology.validate(h))
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(Self {
            topology,
            disabled: topology.heads().filter(|h| !active.contains(h)).collect(),
        })
    }

    pub fn topology(&self) -> ModelTopology {
        self.topology
    }

    pub fn disabled(&self) -> &BTreeSet<HeadId> {
        &self.disabled
    }

    pub fn is_active(&self, id: HeadId) -> bool {
        self.topology.contains(id) && !self.disabled.contains(&id)
    }

    pub fn active_heads(&self) -> impl Iterator<Item = HeadId> + '_ {
        self.topology.heads().filter(|h| !self.disabled.contains(h))
    }

    pub fn disable(&mut self, id: HeadId) -> Result<(), HeadError> {
        self.disabled.insert(self.topology.validate(id)?);
        Ok(())
    }

    /// FNV-1a digest of the sorted disabled flat indices (little-endian `u32`).
    pub fn key(&self) -> u64 {
        let mut flat: Vec<u32> = self
            .disabled
            .iter()
            .map(|h| (h.layer * self.topology.heads_per_layer + h.head) as u32)
            .collect();
        flat.sort_unstable();
        fnv1a(flat.iter().flat_map(|i| i.to_le_bytes()))
    }
}

/// Cache key for a mask; see [`HeadMask::key`].
pub fn mask_key(mask: &HeadMask) -> u64 {
    mask.key()
}

pub fn flat_index(topology: &ModelTopology, id: HeadId) -> Result<usize, HeadError> {
    topology.flat_index(id)
}

fn fnv1a<I: IntoIterator<Item = u8>>(bytes: I) -> u64 {
    bytes.into_iter().fold(FNV_OFFSET_BASIS, |hash, b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// `|a ∩ b| / |a ∪ b|`, and 0 when both sets are empty.
pub fn jaccard(a: &BTreeSet<HeadId>, b: &BTreeSet<HeadId>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// A head set together with the (K, ε) parameters it was searched under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    heads: BTreeSet<HeadId>,
    k_sufficiency: usize,
    epsilon: f64,
}

impl Circuit {
    pub fn new(heads: BTreeSet<HeadId>, k_sufficiency: usize, epsilon: f64) -> Result<Self, HeadError> {
        if heads.len() < k_sufficiency {
            return Err(HeadError::CircuitTooSmall {
                size: heads.len(),
                k: k_sufficiency,
            });
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(HeadError::Epsilon(epsilon));
        }
        Ok(Self {
            heads,
            k_sufficiency,
            epsilon,
        })
    }

    pub fn heads(&self) -> &BTreeSet<HeadId> {
        &self.heads
    }

    pub fn k_sufficiency(&self) -> usize {
        self.k_sufficiency
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn topo(l: usize, h: usize) -> ModelTopology {
        ModelTopology::new(l, h).unwrap()
    }

    #[test]
    fn flat_index_examples() {
        let t = topo(4, 8);
        assert_eq!(t.flat_index(HeadId::new(0, 0)).unwrap(), 0);
        assert_eq!(t.flat_index(HeadId::new(3, 7)).unwrap(), 31);
        assert_eq!(topo(42, 16).flat_index(HeadId::new(2, 5)).unwrap(), 37);
    }

    #[test]
    fn flat_index_rejects_out_of_range() {
        let t = topo(4, 8);
        assert!(matches!(
            t.flat_index(HeadId::new(4, 0)),
            Err(HeadError::InvalidHead { .. })
        ));
        assert!(t.flat_index(HeadId::new(0, 8)).is_err());
        assert!(t.head_at(32).is_err());
    }

    #[test]
    fn empty_topology_rejected() {
        assert_eq!(ModelTopology::new(0, 4), Err(HeadError::EmptyTopology));
        assert_eq!(ModelTopology::new(4, 0), Err(HeadError::EmptyTopology));
    }

    #[test]
    fn topology_text_form() {
        let t: ModelTopology = "20x8".parse().unwrap();
        assert_eq!(t, topo(20, 8));
        assert_eq!(t.to_string(), "20x8");
        assert!("20".parse::<ModelTopology>().is_err());
    }

    #[test]
    fn head_text_form() {
        let h = HeadId::new(2, 5);
        assert_eq!(h.to_string(), "L2.H5");
        assert_eq!("L2.H5".parse::<HeadId>().unwrap(), h);
        assert!("2.5".parse::<HeadId>().is_err());
        assert_eq!(serde_json::to_string(&h).unwrap(), "\"L2.H5\"");
    }

    #[test]
    fn empty_mask_key_is_offset_basis() {
        assert_eq!(HeadMask::full(topo(4, 8)).key(), 0xCBF2_9CE4_8422_2325);
    }

    #[test]
    fn mask_key_known_value() {
        // FNV-1a over bytes 03 00 00 00
        let mut h = FNV_OFFSET_BASIS;
        for b in [3u8, 0, 0, 0] {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        let t = topo(4, 8);
        let m = HeadMask::with_disabled(t, [t.head_at(3).unwrap()]).unwrap();
        assert_eq!(m.key(), h);
    }

    #[test]
    fn mask_key_order_independent() {
        let t = topo(4, 8);
        let (a, b) = (t.head_at(1).unwrap(), t.head_at(2).unwrap());
        let m1 = HeadMask::with_disabled(t, [a, b]).unwrap();
        let mut m2 = HeadMask::full(t);
        m2.disable(b).unwrap();
        m2.disable(a).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.key(), m2.key());
    }

    #[test]
    fn with_active_is_complement() {
        let t = topo(2, 2);
        let active = [HeadId::new(0, 1)];
        let m = HeadMask::with_active(t, &active).unwrap();
        assert_eq!(m.disabled().len(), 3);
        assert!(m.is_active(HeadId::new(0, 1)));
        assert_eq!(m.active_heads().collect::<Vec<_>>(), active.to_vec());
    }

    #[test]
    fn jaccard_examples() {
        let s = |v: &[usize]| v.iter().map(|&i| HeadId::new(0, i)).collect::<BTreeSet<_>>();
        assert_eq!(jaccard(&s(&[0, 1, 2]), &s(&[1, 2, 3])), 0.5);
        assert_eq!(jaccard(&s(&[4, 5]), &s(&[4, 5])), 1.0);
        assert_eq!(jaccard(&s(&[0]), &s(&[1])), 0.0);
        assert_eq!(jaccard(&s(&[]), &s(&[])), 0.0);
    }

    #[test]
    fn circuit_requires_k_heads() {
        let heads: BTreeSet<_> = (0..3).map(|i| HeadId::new(0, i)).collect();
        assert!(Circuit::new(heads.clone(), 4, 0.25).is_err());
        assert!(Circuit::new(heads.clone(), 3, 1.5).is_err());
        assert_eq!(Circuit::new(heads, 3, 0.25).unwrap().len(), 3);
    }

    fn mask_strategy(t: ModelTopology) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0..t.total_heads(), 0..12)
    }

    proptest! {
        #[test]
        fn flat_index_round_trips(l in 1usize..64, h in 1usize..64, seed in any::<usize>()) {
            let t = topo(l, h);
            let i = seed % t.total_heads();
            let id = t.head_at(i).unwrap();
            prop_assert_eq!(t.flat_index(id).unwrap(), i);
        }

        #[test]
        fn mask_key_matches_equality(a in mask_strategy(topo(100, 100)), b in mask_strategy(topo(100, 100))) {
            let t = topo(100, 100);
            let ma = HeadMask::with_disabled(t, a.iter().map(|&i| t.head_at(i).unwrap())).unwrap();
            let mb = HeadMask::with_disabled(t, b.iter().rev().map(|&i| t.head_at(i).unwrap())).unwrap();
            prop_assert_eq!(ma == mb, ma.key() == mb.key());
        }

        #[test]
        fn jaccard_symmetric_and_bounded(a in prop::collection::btree_set(0usize..20, 0..10),
                                         b in prop::collection::btree_set(0usize..20, 0..10)) {
            let sa: BTreeSet<_> = a.iter().map(|&i| HeadId::new(0, i)).collect();
            let sb: BTreeSet<_> = b.iter().map(|&i| HeadId::new(0, i)).collect();
            let j = jaccard(&sa, &sb);
            prop_assert_eq!(j, jaccard(&sb, &sa));
            prop_assert!((0.0..=1.0).contains(&j));
            prop_assert_eq!(j == 1.0, !sa.is_empty() && sa == sb);
        }
    }
}
