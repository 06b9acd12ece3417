//! Minimum sufficient attention-head circuits.
//!
//! Given a separability oracle over head-ablated model configurations, find a
//! small set of attention heads whose every K-subset restores task
//! separability above an ε-interpolated threshold.
//!
//! - [`heads`]: topology, head ids, masks, circuits
//! - [`lsmetric`]: PCA + linear SVM separability score
//! - [`oracle`]: planted, replay and remote oracles with memoization
//! - [`datasets`]: minimal-pair corpus generators and loaders
//! - [`search`]: macro layer search and stochastic head pruning
//! - [`theory`]: hypergeometric miss probabilities and sampling bounds
//! - [`analysis`]: selection frequencies and overlap reports

pub mod analysis;
pub mod datasets;
pub mod embeddings;
pub mod heads;
pub mod lsmetric;
pub mod oracle;
pub mod search;
pub mod theory;

pub use embeddings::LabeledEmbeddings;
pub use heads::{jaccard, mask_key, Circuit, HeadId, HeadMask, ModelTopology};
pub use oracle::{OracleRequest, SeparabilityOracle};
pub use search::{search_k_mshc, understanding_threshold, SearchConfig, SearchResult};
