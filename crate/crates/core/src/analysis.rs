//! Multi-trial aggregation: selection frequencies, thresholded head sets and
//! cross-task overlap.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heads::{jaccard, HeadId, ModelTopology};
use crate::search::{nearest_rank_percentile, SearchResult};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.50, 0.75, 0.95];

/// Trials assumed for a frequency map read back from a heatmap CSV.
pub const HEATMAP_TRIALS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("topology mismatch: expected {expected}, got {actual}")]
    TopologyMismatch {
        expected: ModelTopology,
        actual: ModelTopology,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("heatmap line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionFrequency {
    topology: ModelTopology,
    /// Indexed by flat head index.
    counts: Vec<u32>,
    trials: u32,
}

impl SelectionFrequency {
    pub fn new(topology: ModelTopology, counts: Vec<u32>, trials: u32) -> Result<Self, AnalysisError> {
        if counts.len() != topology.total_heads() {
            return Err(AnalysisError::Parameter(format!(
                "expected {} counts for {topology}, got {}",
                topology.total_heads(),
                counts.len()
            )));
        }
        if trials == 0 {
            return Err(AnalysisError::Parameter("trials must be at least 1".into()));
        }
        if let Some(c) = counts.iter().find(|&&c| c > trials) {
            return Err(AnalysisError::Parameter(format!("count {c} exceeds {trials} trials")));
        }
        Ok(Self {
            topology,
            counts,
            trials,
        })
    }

    /// Counts how many of the given head sets contain each head.
    pub fn from_circuits<'a, I>(topology: ModelTopology, circuits: I) -> Result<Self, AnalysisError>
    where
        I: IntoIterator<Item = &'a BTreeSet<HeadId>>,
    {
        let mut counts = vec![0u32; topology.total_heads()];
        let mut trials = 0;
        for circuit in circuits {
            trials += 1;
            for &h in circuit {
                let i = topology
                    .flat_index(h)
                    .map_err(|e| AnalysisError::Parameter(e.to_string()))?;
                counts[i] += 1;
            }
        }
        if trials == 0 {
            return Err(AnalysisError::Empty);
        }
        Self::new(topology, counts, trials)
    }

    pub fn topology(&self) -> ModelTopology {
        self.topology
    }

    pub fn trials(&self) -> u32 {
        self.trials
    }

    pub fn count(&self, head: HeadId) -> u32 {
        self.topology.flat_index(head).map(|i| self.counts[i]).unwrap_or(0)
    }

    pub fn frequency(&self, head: HeadId) -> f64 {
        f64::from(self.count(head)) / f64::from(self.trials)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    fn frequencies(&self) -> impl Iterator<Item = (HeadId, f64)> + '_ {
        self.topology.heads().map(|h| (h, self.frequency(h)))
    }
}

/// Selection counts over the circuits of `results`.
pub fn aggregate(results: &[SearchResult]) -> Result<SelectionFrequency, AnalysisError> {
    let first = results.first().ok_or(AnalysisError::Empty)?;
    let topology = first.baseline_mask.topology();
    if let Some(r) = results.iter().find(|r| r.baseline_mask.topology() != topology) {
        return Err(AnalysisError::TopologyMismatch {
            expected: topology,
            actual: r.baseline_mask.topology(),
        });
    }
    SelectionFrequency::from_circuits(topology, results.iter().map(|r| r.circuit.heads()))
}

/// How a selection threshold `q` picks heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Heads selected in at least a fraction `q` of trials.
    #[default]
    Frequency,
    /// Heads at or above the `q`-quantile of the nonzero frequencies.
    TopQuantile,
}

fn check_q(q: f64) -> Result<(), AnalysisError> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::Parameter(format!(
            "threshold must be in (0, 1], got {q}"
        )))
    }
}

/// Heads with `count / trials ≥ q`.
pub fn threshold_set(freq: &SelectionFrequency, q: f64) -> Result<BTreeSet<HeadId>, AnalysisError> {
    threshold_set_with(freq, q, ThresholdRule::Frequency)
}

pub fn threshold_set_with(
    freq: &SelectionFrequency,
    q: f64,
    rule: ThresholdRule,
) -> Result<BTreeSet<HeadId>, AnalysisError> {
    check_q(q)?;
    match rule {
        ThresholdRule::Frequency => {
            let need = q * f64::from(freq.trials) - 1e-9;
            Ok(freq
                .topology
                .heads()
                .filter(|&h| f64::from(freq.count(h)) >= need && freq.count(h) > 0)
                .collect())
        }
        ThresholdRule::TopQuantile => {
            let nonzero: Vec<f64> = freq.frequencies().map(|(_, f)| f).filter(|&f| f > 0.0).collect();
            if nonzero.is_empty() {
                return Ok(BTreeSet::new());
            }
            let cut = nearest_rank_percentile(&nonzero, q);
            Ok(freq
                .frequencies()
                .filter(|&(_, f)| f > 0.0 && f >= cut)
                .map(|(h, _)| h)
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub a: String,
    pub b: String,
    pub threshold: f64,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub tasks: Vec<String>,
    pub thresholds: Vec<f64>,
    pub pairs: Vec<PairOverlap>,
    /// `|∩| / |∪|` over all tasks at each threshold; empty with fewer than three tasks.
    pub three_way: Vec<f64>,
}

impl OverlapReport {
    /// Symmetric task × task Jaccard matrix at `thresholds[index]`, unit diagonal.
    pub fn matrix(&self, index: usize) -> Vec<Vec<f64>> {
        let n = self.tasks.len();
        let t = self.thresholds[index];
        let mut m = vec![vec![1.0; n]; n];
        for p in self.pairs.iter().filter(|p| p.threshold == t) {
            let i = self.tasks.iter().position(|x| *x == p.a).unwrap();
            let j = self.tasks.iter().position(|x| *x == p.b).unwrap();
            m[i][j] = p.jaccard;
            m[j][i] = p.jaccard;
        }
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("overlap reports serialize")
    }
}

pub fn overlap_matrix(
    tasks: &[(String, SelectionFrequency)],
    thresholds: &[f64],
) -> Result<OverlapReport, AnalysisError> {
    overlap_matrix_with(tasks, thresholds, ThresholdRule::Frequency)
}

pub fn overlap_matrix_with(
    tasks: &[(String, SelectionFrequency)],
    thresholds: &[f64],
    rule: ThresholdRule,
) -> Result<OverlapReport, AnalysisError> {
    if tasks.len() < 2 {
        return Err(AnalysisError::Parameter(format!(
            "need at least 2 tasks, got {}",
            tasks.len()
        )));
    }
    let topology = tasks[0].1.topology;
    if let Some((_, f)) = tasks.iter().find(|(_, f)| f.topology != topology) {
        return Err(AnalysisError::TopologyMismatch {
            expected: topology,
            actual: f.topology,
        });
    }
    let mut pairs = Vec::new();
    let mut three_way = Vec::new();
    for &q in thresholds {
        let sets = tasks
            .iter()
            .map(|(_, f)| threshold_set_with(f, q, rule))
            .collect::<Result<Vec<_>, _>>()?;
        for i in 0..tasks.len() {
            for j in i + 1..tasks.len() {
                pairs.push(PairOverlap {
                    a: tasks[i].0.clone(),
                    b: tasks[j].0.clone(),
                    threshold: q,
                    jaccard: jaccard(&sets[i], &sets[j]),
                });
            }
        }
        if tasks.len() >= 3 {
            let union: BTreeSet<HeadId> = sets.iter().flatten().copied().collect();
            let inter = union.iter().filter(|h| sets.iter().all(|s| s.contains(h))).count();
            three_way.push(if union.is_empty() {
                0.0
            } else {
                inter as f64 / union.len() as f64
            });
        }
    }
    Ok(OverlapReport {
        tasks: tasks.iter().map(|(t, _)| t.clone()).collect(),
        thresholds: thresholds.to_vec(),
        pairs,
        three_way,
    })
}

/// Layers × heads frequency grid with header `layer,h0,h1,...`, 4 decimals.
pub fn write_heatmap<W: Write>(mut out: W, freq: &SelectionFrequency) -> std::io::Result<()> {
    let t = freq.topology;
    let header: Vec<String> = (0..t.heads_per_layer()).map(|h| format!("h{h}")).collect();
    writeln!(out, "layer,{}", header.join(","))?;
    for layer in 0..t.num_layers() {
        let cells: Vec<String> = t
            .layer_heads(layer)
            .map(|h| format!("{:.4}", freq.frequency(h)))
            .collect();
        writeln!(out, "{layer},{}", cells.join(","))?;
    }
    Ok(())
}

pub fn export_heatmap(freq: &SelectionFrequency, path: &Path) -> Result<(), AnalysisError> {
    let io = |e: std::io::Error| AnalysisError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut buf = Vec::new();
    write_heatmap(&mut buf, freq).map_err(io)?;
    fs::write(path, buf).map_err(io)
}

/// Parses a heatmap; counts are `round(frequency · 10⁴)` over 10⁴ trials.
pub fn parse_heatmap(text: &str) -> Result<SelectionFrequency, AnalysisError> {
    let bad = |line: usize, message: String| AnalysisError::Format { line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty heatmap".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"layer") || cols.len() < 2 {
        return Err(bad(1, format!("expected header layer,h0,..., got {header:?}")));
    }
    for (i, c) in cols[1..].iter().enumerate() {
        if *c != format!("h{i}") {
            return Err(bad(1, format!("column {} should be h{i}, got {c:?}", i + 1)));
        }
    }
    let heads = cols.len() - 1;
    let mut counts = Vec::new();
    let mut layers = 0;
    for (idx, line) in lines {
        let number = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != heads + 1 {
            return Err(bad(
                number,
                format!("expected {} fields, got {}", heads + 1, cells.len()),
            ));
        }
        if cells[0].trim() != layers.to_string() {
            return Err(bad(number, format!("expected layer {layers}, got {:?}", cells[0])));
        }
        for cell in &cells[1..] {
            let f: f64 = cell.trim().parse().map_err(|e| bad(number, format!("{cell:?}: {e}")))?;
            if !(0.0..=1.0).contains(&f) {
                return Err(bad(number, format!("frequency {f} outside [0, 1]")));
            }
            counts.push((f * f64::from(HEATMAP_TRIALS)).round() as u32);
        }
        layers += 1;
    }
    let topology = ModelTopology::new(layers, heads).map_err(|e| bad(1, e.to_string()))?;
    SelectionFrequency::new(topology, counts, HEATMAP_TRIALS)
}

pub fn read_heatmap(path: &Path) -> Result<SelectionFrequency, AnalysisError> {
    let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_heatmap(&text)
}
