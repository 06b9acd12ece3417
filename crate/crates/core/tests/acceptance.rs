//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p mshc-core --test acceptance`. The process exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mshc_core::analysis::{overlap_matrix, threshold_set, SelectionFrequency};
use mshc_core::datasets::{self, arithmetic_pair, Operation, Perturbation, TaskFamily};
use mshc_core::heads::{HeadId, ModelTopology};
use mshc_core::lsmetric::{ls_score, LsError, DEFAULT_C};
use mshc_core::oracle::{PlantedCircuitSpec, PlantedMode, PlantedOracle};
use mshc_core::search::{run_trials, search_k_mshc, understanding_threshold, verify_k_sufficiency, SearchConfig};
use mshc_core::theory::{default_grid, run_grid};
use mshc_core::LabeledEmbeddings;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Active planted heads at which the planted law saturates. Below the search
/// K, so a single planted head in a K-subset already clears U^0.25.
const PLANTED_SATURATION: usize = 3;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn topology() -> ModelTopology {
    ModelTopology::new(20, 8).unwrap()
}

fn recovery_config(seed: u64) -> SearchConfig {
    SearchConfig {
        k: 4,
        seed,
        ..SearchConfig::default()
    }
}

fn planted_oracle(seed: u64) -> PlantedOracle {
    let spec = PlantedCircuitSpec::confined(topology(), 7..=9, 12, PLANTED_SATURATION, seed).unwrap();
    PlantedOracle::new(spec, PlantedMode::Law).unwrap()
}

fn threshold_formula() -> Outcome {
    let u = understanding_threshold(0.99, 0.55, 0.25);
    outcome((u - 0.66).abs() <= 1e-12, format!("U = {u:.17}"))
}

fn planted_recovery_and_eq3() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut superset = 0;
    let mut both = 0;
    let mut extras = Vec::new();
    let mut failures = 0;
    let mut max_calls = 0;
    let mut checked = 0;
    let mut skipped = 0;
    let mut violating_runs = 0;
    let mut violations = 0;
    for seed in 0..20 {
        let oracle = planted_oracle(seed);
        let result = match search_k_mshc(&oracle, "planted", &recovery_config(seed)) {
            Ok(r) => r,
            Err(e) => {
                println!("    seed {seed}: search failed: {e}");
                failures += 1;
                continue;
            }
        };
        let planted = &oracle.spec().planted;
        let extra = result.circuit.heads().difference(planted).count();
        let is_superset = planted.is_subset(result.circuit.heads());
        superset += usize::from(is_superset);
        both += usize::from(is_superset && extra <= 5);
        extras.push(extra);
        max_calls = max_calls.max(result.oracle_calls);

        match verify_k_sufficiency(&oracle, &result, 100_000).unwrap() {
            Some(check) => {
                checked += 1;
                violations += check.violations.len();
                violating_runs += usize::from(!check.violations.is_empty());
            }
            None => skipped += 1,
        }
    }
    let elapsed = start.elapsed();
    let recovery = outcome(
        both >= 18 && elapsed < Duration::from_secs(60),
        format!(
            "superset of H* in {superset}/20, superset with <= 5 non-planted in {both}/20 (need 18), \
             non-planted counts {extras:?}, {failures} failed, max oracle calls {max_calls}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
    let eq3 = outcome(
        violations == 0 && checked > 0,
        format!(
            "{checked} circuits enumerated ({skipped} over the 1e5 subset limit), \
             {violations} violating K-subsets across {violating_runs} circuits"
        ),
    );
    (recovery, eq3)
}

fn theorem_dominance() -> Outcome {
    let start = Instant::now();
    let rows = run_grid(&default_grid(), 10_000, 2024).unwrap();
    let strict = rows.iter().filter(|r| r.exact_below_bound()).count();
    let covered = rows.iter().filter(|r| r.exact_in_interval()).count();
    let elapsed = start.elapsed();
    let need = (0.9 * rows.len() as f64).ceil() as usize;
    outcome(
        strict == rows.len() && covered >= need && elapsed < Duration::from_secs(120),
        format!(
            "exact < hoeffding in {strict}/{n} cells, exact^N inside Wilson CI in {covered}/{n} (need {need}), {:.2}s",
            elapsed.as_secs_f64(),
            n = rows.len()
        ),
    )
}

fn gaussian_classes(rng: &mut ChaCha8Rng, per_class: usize, dim: usize, separation: f64) -> LabeledEmbeddings {
    let mut direction: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * per_class {
        let label: i8 = if i < per_class { 1 } else { -1 };
        let shift = f64::from(label) * separation / 2.0;
        rows.push(
            direction
                .iter()
                .map(|u| {
                    shift * u + {
                        let z: f64 = StandardNormal.sample(rng);
                        z
                    }
                })
                .collect::<Vec<f64>>(),
        );
        labels.push(label);
    }
    LabeledEmbeddings::from_rows(&rows, labels).unwrap()
}

fn rigid_motion(data: &LabeledEmbeddings, rng: &mut ChaCha8Rng) -> LabeledEmbeddings {
    let d = data.cols();
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
    let rows: Vec<Vec<f64>> = data
        .iter_rows()
        .map(|r| {
            (0..d)
                .map(|i| (0..d).map(|j| q[(i, j)] * r[j]).sum::<f64>() + shift[i])
                .collect()
        })
        .collect();
    LabeledEmbeddings::from_rows(&rows, data.labels().to_vec()).unwrap()
}

fn ls_sanity() -> Outcome {
    let perfect = (0..20)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = gaussian_classes(&mut rng, 50, 20, 10.0);
            ls_score(&data, 5, DEFAULT_C).unwrap() == 1.0
        })
        .count();

    let xor = LabeledEmbeddings::from_rows(
        &[vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]],
        vec![1, 1, -1, -1],
    )
    .unwrap();
    let xor_score = ls_score(&xor, 2, DEFAULT_C).unwrap();

    let mut worst_gap: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let data = gaussian_classes(&mut rng, 30, 8, 1.2);
        let moved = rigid_motion(&data, &mut rng);
        let a = ls_score(&data, 5, DEFAULT_C).unwrap();
        let b = ls_score(&moved, 5, DEFAULT_C).unwrap();
        worst_gap = worst_gap.max((a - b).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let wide = gaussian_classes(&mut rng, 20, 10, 4.0);
    let d6 = matches!(ls_score(&wide, 6, DEFAULT_C), Err(LsError::Dimension { .. }));

    outcome(
        perfect == 20 && xor_score <= 0.75 && worst_gap <= 1e-6 && d6,
        format!(
            "separated Gaussians 1.0 in {perfect}/20, XOR-4 {xor_score}, rigid-motion gap {worst_gap:e}, D=6 rejected: {d6}"
        ),
    )
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn dataset_contracts() -> Outcome {
    let examples = datasets::gen_arithmetic(10_000, 42).unwrap();
    let mut problems = Vec::new();
    let mut positives = 0;
    for pair in examples.chunks(2) {
        let (good, bad) = (&pair[0], &pair[1]);
        positives += usize::from(good.label == 1) + usize::from(bad.label == 1);
        let parse = |t: &str| -> Option<(i64, char, i64, i64)> {
            let tok: Vec<&str> = t.split(' ').collect();
            if tok.len() != 5 || tok[3] != "=" {
                return None;
            }
            Some((
                tok[0].parse().ok()?,
                tok[1].chars().next()?,
                tok[2].parse().ok()?,
                tok[4].parse().ok()?,
            ))
        };
        let (Some((n1, op, n2, r)), Some((m1, op2, m2, wrong))) = (parse(&good.text), parse(&bad.text)) else {
            problems.push(format!("unparseable pair {}", good.pair_id));
            continue;
        };
        let truth = match op {
            '+' => n1 + n2,
            '-' => n1 - n2,
            _ => i64::MIN,
        };
        let allowed = [round_half_up(0.5 * r as f64), round_half_up(1.5 * r as f64), r + 1];
        let ok = (1..=1000).contains(&n1)
            && (1..=1000).contains(&n2)
            && (m1, op2, m2) == (n1, op, n2)
            && truth == r
            && good.label == 1
            && bad.label == -1
            && good.pair_id == bad.pair_id
            && allowed.contains(&wrong)
            && wrong != r;
        if !ok {
            problems.push(format!("{:?} / {:?}", good.text, bad.text));
        }
    }
    let balanced = 2 * positives == examples.len() && examples.len() == 20_000;
    let [good, bad] = arithmetic_pair(0, 1338, Operation::Add, 88, Perturbation::OneAndHalf);
    let worked = good.text == "1338 + 88 = 1426" && bad.text == "1338 + 88 = 2139";
    outcome(
        problems.is_empty() && balanced && worked,
        format!(
            "{} pairs checked, {} contract violations{}, balanced: {balanced}, worked pair: {:?} / {:?}",
            examples.len() / 2,
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default(),
            good.text,
            bad.text
        ),
    )
}

fn determinism() -> Outcome {
    let run = || search_k_mshc(&planted_oracle(5), "planted", &recovery_config(5)).map(|r| r.to_json());
    let (a, b) = (run(), run());
    let json_same = matches!((&a, &b), (Ok(x), Ok(y)) if x == y);

    let csv = |family: TaskFamily| {
        let mut buf = Vec::new();
        datasets::write_corpus_csv(&mut buf, &datasets::generate(family, 500, 11).unwrap()).unwrap();
        buf
    };
    let families = [TaskFamily::Grammar, TaskFamily::Arithmetic, TaskFamily::WordProblem];
    let csv_same = families.iter().all(|&f| csv(f) == csv(f));
    outcome(
        json_same && csv_same,
        format!(
            "SearchResult JSON identical: {json_same} ({} bytes), corpus CSVs identical: {csv_same}",
            a.as_ref().map(|s| s.len()).unwrap_or(0)
        ),
    )
}

fn task_frequency(planted: BTreeSet<HeadId>, seed: u64) -> SelectionFrequency {
    let mut spec = PlantedCircuitSpec::new(topology(), planted, PLANTED_SATURATION);
    spec.seed = seed;
    let oracle = PlantedOracle::new(spec, PlantedMode::Law).unwrap();
    let outcomes = run_trials(&oracle, "planted", &recovery_config(seed), 20).unwrap();
    let circuits: Vec<&BTreeSet<HeadId>> = outcomes
        .iter()
        .filter_map(|o| o.ok())
        .map(|r| r.circuit.heads())
        .collect();
    SelectionFrequency::from_circuits(topology(), circuits).unwrap()
}

fn overlap_machinery() -> Outcome {
    let t = topology();
    let pool: Vec<HeadId> = (7..=9).flat_map(|l| t.layer_heads(l).collect::<Vec<_>>()).collect();
    // A = pool[0..12], B = pool[6..18]: 6 shared heads, union 18
    let a: BTreeSet<HeadId> = pool[..12].iter().copied().collect();
    let b: BTreeSet<HeadId> = pool[6..18].iter().copied().collect();
    let far: BTreeSet<HeadId> = (13..=15)
        .flat_map(|l| t.layer_heads(l).take(4).collect::<Vec<_>>())
        .collect();

    let fa = task_frequency(a, 100);
    let fb = task_frequency(b, 200);
    let ff = task_frequency(far, 300);
    let shared = overlap_matrix(&[("a".into(), fa.clone()), ("b".into(), fb)], &[0.95]).unwrap();
    let disjoint = overlap_matrix(&[("a".into(), fa.clone()), ("far".into(), ff)], &[0.95]).unwrap();
    let j_shared = shared.pairs[0].jaccard;
    let j_disjoint = disjoint.pairs[0].jaccard;
    let super_heads = threshold_set(&fa, 0.95).unwrap().len();
    outcome(
        (j_shared - 1.0 / 3.0).abs() <= 0.05 && j_disjoint == 0.0,
        format!("half-shared Jaccard {j_shared:.4} (target 1/3 ± 0.05), disjoint {j_disjoint}, task A super-heads {super_heads}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let timed = |name: &'static str, f: &dyn Fn() -> Outcome, results: &mut Vec<(&str, Outcome)>| {
        results.push((name, f()));
    };
    timed("threshold-formula", &threshold_formula, &mut results);
    let (recovery, eq3) = planted_recovery_and_eq3();
    results.push(("planted-circuit-recovery", recovery));
    results.push(("literal-k-sufficiency", eq3));
    timed("sampling-bound-dominance", &theorem_dominance, &mut results);
    timed("ls-metric-sanity", &ls_sanity, &mut results);
    timed("dataset-contracts", &dataset_contracts, &mut results);
    timed("determinism", &determinism, &mut results);
    timed("overlap-machinery", &overlap_machinery, &mut results);

    println!();
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("\nacceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
