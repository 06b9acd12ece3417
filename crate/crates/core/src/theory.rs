//! Miss probabilities for random K-subset sampling.
//!
//! A candidate set of `|C|` heads contains `|Q| = ⌊δ_i·|C|⌋` low-impact heads.
//! A sampled K-subset "detects" contamination when it holds more than
//! `δ_T·K` of them; a miss is `N` consecutive samples that all fail to.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("io error: {0}")]
    Io(String),
}

/// `⌊x⌋`, tolerant of products like `0.29 · 100` landing just below an integer.
fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationModel {
    pub candidate_size: usize,
    pub low_impact_fraction: f64,
    pub threshold_fraction: f64,
    pub subset_size: usize,
    pub samples: usize,
}

impl ContaminationModel {
    pub fn new(
        candidate_size: usize,
        low_impact_fraction: f64,
        threshold_fraction: f64,
        subset_size: usize,
        samples: usize,
    ) -> Result<Self, TheoryError> {
        let m = Self {
            candidate_size,
            low_impact_fraction,
            threshold_fraction,
            subset_size,
            samples,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        let (di, dt) = (self.low_impact_fraction, self.threshold_fraction);
        if !(0.0 <= dt && dt < di && di <= 1.0) {
            return Err(TheoryError::Parameter(format!(
                "need 0 <= delta_T < delta_i <= 1 (delta_i {di}, delta_T {dt})"
            )));
        }
        if self.subset_size == 0 || self.subset_size > self.candidate_size {
            return Err(TheoryError::Parameter(format!(
                "need 1 <= K <= |C| (K {}, |C| {})",
                self.subset_size, self.candidate_size
            )));
        }
        Ok(())
    }

    /// `|Q|`
    pub fn low_impact_count(&self) -> usize {
        floor_count(self.low_impact_fraction * self.candidate_size as f64)
    }

    /// Largest low-impact count that still counts as a miss, `⌊δ_T·K⌋`.
    pub fn miss_cutoff(&self) -> usize {
        floor_count(self.threshold_fraction * self.subset_size as f64)
    }

    /// Exact single-sample miss probability.
    pub fn exact_single_miss(&self) -> f64 {
        hypergeom_tail(
            self.candidate_size,
            self.low_impact_count(),
            self.subset_size,
            self.miss_cutoff(),
        )
        .expect("validated model")
    }

    /// Exact probability that all `N` independent samples miss.
    pub fn exact_miss(&self) -> f64 {
        self.exact_single_miss().powi(self.samples as i32)
    }

    pub fn hoeffding_single(&self) -> f64 {
        hoeffding_bound(self.subset_size, 1, self.low_impact_fraction, self.threshold_fraction)
    }

    pub fn hoeffding_miss_bound(&self) -> f64 {
        hoeffding_bound(
            self.subset_size,
            self.samples,
            self.low_impact_fraction,
            self.threshold_fraction,
        )
    }

    pub fn expected_undetected_bound(&self) -> f64 {
        let q = self.low_impact_count() as f64;
        q / (self.threshold_fraction * self.subset_size as f64 + 1.0) * self.hoeffding_miss_bound()
    }
}

/// `Pr[H ≤ at_most]` for `H ~ Hypergeometric(pop, marked, draws)`.
pub fn hypergeom_tail(pop: usize, marked: usize, draws: usize, at_most: usize) -> Result<f64, TheoryError> {
    if marked > pop || draws > pop {
        return Err(TheoryError::Parameter(format!(
            "need marked, draws <= pop (pop {pop}, marked {marked}, draws {draws})"
        )));
    }
    let lo = draws.saturating_sub(pop - marked);
    let hi = draws.min(marked);
    if at_most >= hi {
        return Ok(1.0);
    }
    if at_most < lo {
        return Ok(0.0);
    }
    // log pmf up to a constant, via p(h+1)/p(h) = (m−h)(n−h) / ((h+1)(N−m−n+h+1))
    let mut logw = Vec::with_capacity(hi - lo + 1);
    let mut acc = 0.0;
    logw.push(acc);
    for h in lo..hi {
        let num = ((marked - h) * (draws - h)) as f64;
        let den = ((h + 1) * (pop - marked + h + 1 - draws)) as f64;
        acc += (num / den).ln();
        logw.push(acc);
    }
    let tail = log_sum_exp(&logw[..=at_most - lo]);
    let total = log_sum_exp(&logw);
    Ok((tail - total).exp().min(1.0))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `exp(−2·N·K·(δ_i − δ_T)²)`
pub fn hoeffding_bound(k: usize, samples: usize, delta_i: f64, delta_t: f64) -> f64 {
    let gap = delta_i - delta_t;
    (-2.0 * samples as f64 * k as f64 * gap * gap).exp()
}

/// 95% Wilson score interval for `successes / trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMiss {
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub repetitions: u64,
}

pub const MIN_REPETITIONS: u64 = 100;

/// Monte-Carlo miss frequency: each repetition draws `N` K-subsets of `|C|`
/// (low-impact heads are indices `< |Q|`) and misses if none exceeds the cutoff.
pub fn empirical_miss_rate(
    model: &ContaminationModel,
    repetitions: u64,
    seed: u64,
) -> Result<EmpiricalMiss, TheoryError> {
    model.validate()?;
    if repetitions < MIN_REPETITIONS {
        return Err(TheoryError::Parameter(format!(
            "need at least {MIN_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    let q = model.low_impact_count();
    let cutoff = model.miss_cutoff();
    let misses: u64 = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep);
            let all_missed = (0..model.samples).all(|_| {
                let hits = rand::seq::index::sample(&mut rng, model.candidate_size, model.subset_size)
                    .iter()
                    .filter(|&i| i < q)
                    .count();
                hits <= cutoff
            });
            u64::from(all_missed)
        })
        .sum();
    let (ci_lo, ci_hi) = wilson_interval(misses, repetitions);
    Ok(EmpiricalMiss {
        rate: misses as f64 / repetitions as f64,
        ci_lo,
        ci_hi,
        repetitions,
    })
}

/// One row of the validation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model: ContaminationModel,
    pub exact: f64,
    pub hoeffding: f64,
    pub empirical: EmpiricalMiss,
}

impl GridRow {
    /// Exact miss probability lies strictly below the Hoeffding bound.
    pub fn exact_below_bound(&self) -> bool {
        self.exact < self.hoeffding
    }

    pub fn exact_in_interval(&self) -> bool {
        self.empirical.ci_lo <= self.exact && self.exact <= self.empirical.ci_hi
    }
}

/// `K ∈ {5, 10}`, `N ∈ {1, 5, 10}`, `δ_i ∈ {0.3, 0.5}`, `δ_T ∈ {0.1, 0.2}`, `|C| = 200`.
pub fn default_grid() -> Vec<ContaminationModel> {
    grid(&[5, 10], &[1, 5, 10], &[0.3, 0.5], &[0.1, 0.2], &[200]).expect("default grid is valid")
}

pub fn grid(
    ks: &[usize],
    ns: &[usize],
    delta_is: &[f64],
    delta_ts: &[f64],
    sizes: &[usize],
) -> Result<Vec<ContaminationModel>, TheoryError> {
    let mut out = Vec::new();
    for &k in ks {
        for &n in ns {
            for &di in delta_is {
                for &dt in delta_ts {
                    for &c in sizes {
                        out.push(ContaminationModel::new(c, di, dt, k, n)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Evaluates every model; cell `i` uses Monte-Carlo seed `seed + i`.
pub fn run_grid(models: &[ContaminationModel], repetitions: u64, seed: u64) -> Result<Vec<GridRow>, TheoryError> {
    models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(GridRow {
                model: *m,
                exact: m.exact_miss(),
                hoeffding: m.hoeffding_miss_bound(),
                empirical: empirical_miss_rate(m, repetitions, seed.wrapping_add(i as u64))?,
            })
        })
        .collect()
}

/// CSV with header `K,N,delta_i,delta_T,C,exact,hoeffding,empirical,ci_lo,ci_hi`.
pub fn write_grid_csv<W: Write>(mut out: W, rows: &[GridRow]) -> Result<(), TheoryError> {
    let io = |e: std::io::Error| TheoryError::Io(e.to_string());
    writeln!(out, "K,N,delta_i,delta_T,C,exact,hoeffding,empirical,ci_lo,ci_hi").map_err(io)?;
    for r in rows {
        let m = &r.model;
        writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{},{},{}",
            m.subset_size,
            m.samples,
            m.low_impact_fraction,
            m.threshold_fraction,
            m.candidate_size,
            r.exact,
            r.hoeffding,
            r.empirical.rate,
            r.empirical.ci_lo,
            r.empirical.ci_hi
        )
        .map_err(io)?;
    }
    Ok(())
}
