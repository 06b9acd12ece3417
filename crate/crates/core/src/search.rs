//! Search for a (K, ε)-minimum sufficient head circuit.
//!
//! Two phases: a macro pass ablates sliding windows of `W` layers to find
//! the layers whose removal hurts most, then stochastic pruning repeatedly
//! samples head subsets of the candidate set and discards the least useful
//! one until every sampled K-subset restores the score above the threshold.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heads::{Circuit, HeadId, HeadMask, ModelTopology};
use crate::oracle::{OracleError, OracleRequest, SeparabilityOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropAggregation {
    /// A layer keeps the smallest drop over the windows covering it.
    #[default]
    Min,
    /// A layer keeps the largest drop over the windows covering it.
    Max,
}

impl std::str::FromStr for DropAggregation {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(DropAggregation::Min),
            "max" => Ok(DropAggregation::Max),
            other => Err(SearchError::Config(format!(
                "drop aggregation must be min or max, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub window: usize,
    pub percentile: f64,
    pub samples: usize,
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Pruning iteration cap; `None` means `10 · |C_initial|`.
    pub max_iterations: Option<usize>,
    pub drop_aggregation: DropAggregation,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            window: 5,
            percentile: 0.75,
            samples: 10,
            k: 10,
            epsilon: 0.25,
            seed: 0,
            max_iterations: None,
            drop_aggregation: DropAggregation::Min,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, topology: ModelTopology) -> Result<(), SearchError> {
        let err = |m: String| Err(SearchError::Config(m));
        if self.window == 0 || self.window > topology.num_layers() {
            return err(format!(
                "window must be in 1..={} for topology {topology}, got {}",
                topology.num_layers(),
                self.window
            ));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return err(format!("percentile must be in (0, 1), got {}", self.percentile));
        }
        if self.samples == 0 {
            return err("samples must be at least 1".into());
        }
        if self.k == 0 {
            return err("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return err(format!("epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if self.max_iterations == Some(0) {
            return err("max_iterations must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceAction {
    Pruned,
    Halved,
    Terminated,
}

impl fmt::Display for TraceAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceAction::Pruned => "pruned",
            TraceAction::Halved => "halved",
            TraceAction::Terminated => "terminated",
        })
    }
}

/// One pruning iteration. `candidates` is `|C|` before the action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub candidates: usize,
    pub k: usize,
    pub worst_sample_score: f64,
    pub action: TraceAction,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("candidate set shrank to {size} heads, below k = {k}")]
    CircuitTooSmall {
        size: usize,
        k: usize,
        trace: Vec<TraceEntry>,
    },
    #[error("pruning did not terminate within {iterations} iterations")]
    NonTermination { iterations: usize, trace: Vec<TraceEntry> },
}

impl SearchError {
    pub fn trace(&self) -> Option<&[TraceEntry]> {
        match self {
            SearchError::CircuitTooSmall { trace, .. } | SearchError::NonTermination { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: SearchConfig,
    pub dataset_id: String,
    pub circuit: Circuit,
    /// `B`: the model with every initial candidate head disabled.
    pub baseline_mask: HeadMask,
    pub full_score: f64,
    pub baseline_score: f64,
    pub threshold: f64,
    pub drop_profile: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub oracle_calls: u64,
}

impl SearchResult {
    pub fn initial_candidates(&self) -> &BTreeSet<HeadId> {
        self.baseline_mask.disabled()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("search results serialize")
    }

    /// `layer,drop` rows.
    pub fn write_drop_profile_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_drop_profile_csv(&mut out, &self.drop_profile)
    }
}

pub fn write_drop_profile_csv<W: Write>(mut out: W, profile: &[f64]) -> std::io::Result<()> {
    writeln!(out, "layer,drop")?;
    for (layer, drop) in profile.iter().enumerate() {
        writeln!(out, "{layer},{drop}")?;
    }
    Ok(())
}

/// `U^ε = S(B) + ε · (S(M) − S(B))`.
pub fn understanding_threshold(full: f64, base: f64, epsilon: f64) -> f64 {
    base + epsilon * (full - base)
}

/// Nearest-rank `p`-th percentile of `values`.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // guard against p·n landing a hair above an integer
    let rank = ((p * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

struct Scorer<'a, O: ?Sized> {
    oracle: &'a O,
    dataset_id: &'a str,
    topology: ModelTopology,
    calls: u64,
}

impl<'a, O: SeparabilityOracle + ?Sized> Scorer<'a, O> {
    fn new(oracle: &'a O, dataset_id: &'a str) -> Self {
        Self {
            oracle,
            dataset_id,
            topology: oracle.topology(),
            calls: 0,
        }
    }

    fn request(&self, disabled: impl IntoIterator<Item = HeadId>) -> Result<OracleRequest, OracleError> {
        let mask = HeadMask::with_disabled(self.topology, disabled)?;
        OracleRequest::new(self.dataset_id, mask)
    }

    fn score(&mut self, disabled: impl IntoIterator<Item = HeadId>) -> Result<f64, OracleError> {
        let request = self.request(disabled)?;
        self.calls += 1;
        self.oracle.score(&request)
    }

    /// Scores several disabled sets concurrently; results keep input order.
    fn score_all(&mut self, disabled_sets: Vec<Vec<HeadId>>) -> Result<Vec<f64>, OracleError> {
        let requests = disabled_sets
            .into_iter()
            .map(|d| self.request(d))
            .collect::<Result<Vec<_>, _>>()?;
        self.calls += requests.len() as u64;
        let oracle = self.oracle;
        requests.par_iter().map(|r| oracle.score(r)).collect()
    }
}

/// Candidate heads and per-layer drop profile from window ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroOutcome {
    pub candidates: BTreeSet<HeadId>,
    pub drop_profile: Vec<f64>,
    pub full_score: f64,
    pub oracle_calls: u64,
}

pub fn macro_layer_search<O: SeparabilityOracle + ?Sized>(
    oracle: &O,
    dataset_id: &str,
    config: &SearchConfig,
) -> Result<MacroOutcome, SearchError> {
    let topology = oracle.topology();
    config.validate(topology)?;
    let mut scorer = Scorer::new(oracle, dataset_id);
    let full_score = scorer.score([])?;
    let layers = topology.num_layers();
    let w = config.window;

    let windows: Vec<Vec<HeadId>> = (0..=layers - w)
        .map(|s| {
            (s..s + w)
                .flat_map(|l| topology.layer_heads(l).collect::<Vec<_>>())
                .collect()
        })
        .collect();
    let ablated = scorer.score_all(windows)?;

    let mut drop = match config.drop_aggregation {
        DropAggregation::Min => vec![f64::INFINITY; layers],
        DropAggregation::Max => vec![0.0; layers],
    };
    for (start, score) in ablated.iter().enumerate() {
        let d = full_score - score;
        for slot in &mut drop[start..start + w] {
            *slot = match config.drop_aggregation {
                DropAggregation::Min => slot.min(d),
                DropAggregation::Max => slot.max(d),
            };
        }
    }

    let cut = nearest_rank_percentile(&drop, config.percentile);
    let candidates = (0..layers)
        .filter(|&l| drop[l] >= cut)
        .flat_map(|l| topology.layer_heads(l).collect::<Vec<_>>())
        .collect();
    Ok(MacroOutcome {
        candidates,
        drop_profile: drop,
        full_score,
        oracle_calls: scorer.calls,
    })
}

/// Result of the pruning phase alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub circuit: BTreeSet<HeadId>,
    pub baseline_score: f64,
    pub threshold: f64,
    pub trace: Vec<TraceEntry>,
    pub oracle_calls: u64,
}

/// Stochastic head pruning over `candidates`, with the baseline frozen at
/// "every candidate disabled". Heads pruned along the way stay disabled.
pub fn stochastic_prune<O: SeparabilityOracle + ?Sized>(
    oracle: &O,
    dataset_id: &str,
    candidates: &BTreeSet<HeadId>,
    config: &SearchConfig,
    full_score: f64,
) -> Result<PruneOutcome, SearchError> {
    if candidates.is_empty() {
        return Err(SearchError::Config("candidate set is empty".into()));
    }
    let kk = config.k;
    let mut scorer = Scorer::new(oracle, dataset_id);
    let baseline_score = scorer.score(candidates.iter().copied())?;
    let threshold = understanding_threshold(full_score, baseline_score, config.epsilon);
    let cap = config.max_iterations.unwrap_or(10 * candidates.len());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current: Vec<HeadId> = candidates.iter().copied().collect();
    let mut trace = Vec::new();
    let mut k = kk.max(current.len() / 2);

    for iteration in 0..cap {
        if current.len() < kk {
            return Err(SearchError::CircuitTooSmall {
                size: current.len(),
                k: kk,
                trace,
            });
        }
        if k > current.len() {
            k = kk.max(current.len() / 2);
        }

        // All subsets are drawn before any evaluation so that the parallel
        // fan-out cannot perturb the RNG stream.
        let subsets: Vec<Vec<HeadId>> = (0..config.samples)
            .map(|_| current.choose_multiple(&mut rng, k).copied().collect())
            .collect();
        let disabled_sets = subsets
            .iter()
            .map(|theta| {
                let keep: BTreeSet<HeadId> = theta.iter().copied().collect();
                candidates.iter().copied().filter(|h| !keep.contains(h)).collect()
            })
            .collect();
        let scores = scorer.score_all(disabled_sets)?;

        let mut worst = 1.0;
        let mut worst_idx = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s < worst {
                worst = s;
                worst_idx = i;
            }
        }

        let action = if worst <= threshold {
            let drop_set: BTreeSet<HeadId> = subsets[worst_idx].iter().copied().collect();
            TraceAction::Pruned.record(&mut trace, iteration, current.len(), k, worst);
            current.retain(|h| !drop_set.contains(h));
            continue;
        } else if k == kk {
            TraceAction::Terminated
        } else {
            TraceAction::Halved
        };
        action.record(&mut trace, iteration, current.len(), k, worst);
        match action {
            TraceAction::Terminated => {
                return Ok(PruneOutcome {
                    circuit: current.into_iter().collect(),
                    baseline_score,
                    threshold,
                    trace,
                    oracle_calls: scorer.calls,
                });
            }
            _ => k = kk.max(k / 2),
        }
    }
    if current.len() < kk {
        return Err(SearchError::CircuitTooSmall {
            size: current.len(),
            k: kk,
            trace,
        });
    }
    Err(SearchError::NonTermination { iterations: cap, trace })
}

impl TraceAction {
    fn record(self, trace: &mut Vec<TraceEntry>, iteration: usize, candidates: usize, k: usize, worst: f64) {
        trace.push(TraceEntry {
            iteration,
            candidates,
            k,
            worst_sample_score: worst,
            action: self,
        });
    }
}

/// Macro layer search followed by stochastic pruning.
pub fn search_k_mshc<O: SeparabilityOracle + ?Sized>(
    oracle: &O,
    dataset_id: &str,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    let topology = oracle.topology();
    let macro_outcome = macro_layer_search(oracle, dataset_id, config)?;
    let pruned = stochastic_prune(
        oracle,
        dataset_id,
        &macro_outcome.candidates,
        config,
        macro_outcome.full_score,
    )?;
    let circuit =
        Circuit::new(pruned.circuit, config.k, config.epsilon).map_err(|e| SearchError::Config(e.to_string()))?;
    let baseline_mask =
        HeadMask::with_disabled(topology, macro_outcome.candidates.iter().copied()).map_err(OracleError::from)?;
    Ok(SearchResult {
        config: config.clone(),
        dataset_id: dataset_id.to_string(),
        circuit,
        baseline_mask,
        full_score: macro_outcome.full_score,
        baseline_score: pruned.baseline_score,
        threshold: pruned.threshold,
        drop_profile: macro_outcome.drop_profile,
        trace: pruned.trace,
        oracle_calls: macro_outcome.oracle_calls + pruned.oracle_calls,
    })
}

/// Oracle calls implied by a result: windows, `S(M)`, `S(B)` and `N` per iteration.
pub fn expected_oracle_calls(result: &SearchResult) -> u64 {
    let layers = result.drop_profile.len();
    let windows = (layers + 1 - result.config.window) as u64;
    windows + 2 + (result.config.samples * result.trace.len()) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub result: Result<SearchResult, SearchError>,
}

impl TrialOutcome {
    pub fn ok(&self) -> Option<&SearchResult> {
        self.result.as_ref().ok()
    }
}

/// Trials with seeds `config.seed + t` against one oracle.
pub fn run_trials<O: SeparabilityOracle + ?Sized>(
    oracle: &O,
    dataset_id: &str,
    config: &SearchConfig,
    trials: usize,
) -> Result<Vec<TrialOutcome>, SearchError> {
    run_trials_with(|_, _| oracle, dataset_id, config, trials)
}

/// Trials where `oracle_for(trial, seed)` supplies the oracle, e.g. one
/// backed by a freshly resampled mini-batch. A failed trial is recorded and
/// the remaining trials still run.
pub fn run_trials_with<O, F>(
    mut oracle_for: F,
    dataset_id: &str,
    config: &SearchConfig,
    trials: usize,
) -> Result<Vec<TrialOutcome>, SearchError>
where
    O: SeparabilityOracle,
    F: FnMut(usize, u64) -> O,
{
    if trials == 0 {
        return Err(SearchError::Config("trials must be at least 1".into()));
    }
    let mut outcomes = Vec::with_capacity(trials);
    for trial in 0..trials {
        let seed = config.seed.wrapping_add(trial as u64);
        let trial_config = SearchConfig { seed, ..config.clone() };
        let oracle = oracle_for(trial, seed);
        let result = search_k_mshc(&oracle, dataset_id, &trial_config);
        if let Err(e) = &result {
            log::warn!("trial {trial} (seed {seed}) failed: {e}");
        }
        outcomes.push(TrialOutcome { trial, seed, result });
    }
    Ok(outcomes)
}

/// Number of `k`-subsets of an `n`-set, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Outcome of checking every K-subset of a circuit against the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyCheck {
    pub subsets_checked: u64,
    /// K-subsets whose restored score fell below the threshold.
    pub violations: Vec<BTreeSet<HeadId>>,
}

/// Exhaustively scores `B ∪ Θ` for every K-subset `Θ` of the circuit.
/// Returns `None` when there are more than `limit` subsets.
pub fn verify_k_sufficiency<O: SeparabilityOracle + ?Sized>(
    oracle: &O,
    result: &SearchResult,
    limit: u128,
) -> Result<Option<SufficiencyCheck>, OracleError> {
    let heads: Vec<HeadId> = result.circuit.heads().iter().copied().collect();
    let k = result.circuit.k_sufficiency();
    if binomial(heads.len(), k) > limit {
        return Ok(None);
    }
    let mut subsets = Vec::new();
    for_each_combination(heads.len(), k, |idx| {
        subsets.push(idx.iter().map(|&i| heads[i]).collect::<BTreeSet<_>>())
    });
    let topology = oracle.topology();
    let initial = result.initial_candidates();
    let scores = subsets
        .par_iter()
        .map(|theta| {
            let mask = HeadMask::with_disabled(topology, initial.iter().copied().filter(|h| !theta.contains(h)))?;
            oracle.score(&OracleRequest::new(result.dataset_id.as_str(), mask)?)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let violations = subsets
        .into_iter()
        .zip(scores)
        .filter(|(_, s)| *s < result.threshold)
        .map(|(t, _)| t)
        .collect();
    Ok(Some(SufficiencyCheck {
        subsets_checked: binomial(heads.len(), k) as u64,
        violations,
    }))
}
