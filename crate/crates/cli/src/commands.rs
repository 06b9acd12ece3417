use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mshc_core::analysis::{self, SelectionFrequency};
use mshc_core::datasets;
use mshc_core::search::{run_trials_with, SearchError, TrialOutcome};
use mshc_core::theory::{self, ContaminationModel};
use serde_json::json;

use crate::args::{GenArgs, OverlapArgs, SearchArgs, TheoryArgs};
use crate::error::CliError;
use crate::manifest::{write_with_manifest_ref, RunManifest, MANIFEST_FILE};
use crate::oracles;

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let examples = datasets::generate(args.family, args.count, args.seed)?;
    let mut manifest = RunManifest::new("gen", &args.out);
    manifest.dataset = json!({ "family": args.family, "count": args.count, "seed": args.seed });
    manifest.write(&sibling_manifest(&args.out))?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    datasets::write_corpus_csv(BufWriter::new(file), &examples)?;
    println!("wrote {} rows to {}", examples.len(), args.out.display());
    Ok(())
}

/// `a.csv` → `a.csv.manifest.json`
fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn search(args: &SearchArgs) -> Result<(), CliError> {
    let config = args.config.to_config();
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if let Some(t) = args.topology {
        config.validate(t)?;
    }
    let resolved = oracles::resolve(args)?;
    config.validate(resolved.topology)?;

    let mut manifest = RunManifest::new("search", &args.out);
    manifest.config = Some(config.clone());
    manifest.oracle = Some(resolved.kind.clone());
    manifest.dataset = json!({ "dataset_id": resolved.dataset_id, "topology": resolved.topology.to_string() });
    manifest.parameters = json!({ "trials": args.trials });
    manifest.write(&args.out.join(MANIFEST_FILE))?;

    let setup = &resolved.setup;
    let outcomes = run_trials_with(
        |_, seed| setup.for_trial(seed),
        &resolved.dataset_id,
        &config,
        args.trials,
    )?;

    if args.trials == 1 {
        let outcome = outcomes.into_iter().next().expect("one trial");
        return match outcome.result {
            Ok(result) => {
                write_with_manifest_ref(
                    &args.out.join("result.json"),
                    serde_json::to_value(&result).map_err(anyhow::Error::from)?,
                    MANIFEST_FILE,
                )?;
                let file = File::create(args.out.join("drop_profile.csv"))?;
                result.write_drop_profile_csv(BufWriter::new(file))?;
                print_result(None, &result);
                Ok(())
            }
            Err(e) => {
                write_with_manifest_ref(
                    &args.out.join("error.json"),
                    failure_json(&outcome.trial, outcome.seed, &e),
                    MANIFEST_FILE,
                )?;
                Err(e.into())
            }
        };
    }

    let width = (args.trials - 1).to_string().len().max(2);
    let mut successes = Vec::new();
    let mut failures = Vec::new();
    for TrialOutcome { trial, seed, result } in outcomes {
        let path = args.out.join(format!("trial_{trial:0width$}.json"));
        match result {
            Ok(r) => {
                write_with_manifest_ref(
                    &path,
                    serde_json::to_value(&r).map_err(anyhow::Error::from)?,
                    MANIFEST_FILE,
                )?;
                print_result(Some(trial), &r);
                successes.push(r);
            }
            Err(e) => {
                write_with_manifest_ref(&path, failure_json(&trial, seed, &e), MANIFEST_FILE)?;
                eprintln!("trial {trial}: {e}");
                failures.push((trial, seed, e));
            }
        }
    }
    let summary = json!({
        "trials": args.trials,
        "succeeded": successes.len(),
        "failed": failures.iter().map(|(t, s, e)| json!({ "trial": t, "seed": s, "error": e.to_string() })).collect::<Vec<_>>(),
    });
    write_with_manifest_ref(&args.out.join("summary.json"), summary, MANIFEST_FILE)?;
    if successes.is_empty() {
        let (_, _, first) = failures.into_iter().next().expect("every trial failed");
        return Err(first.into());
    }
    let freq = analysis::aggregate(&successes)?;
    analysis::export_heatmap(&freq, &args.out.join("frequency.csv"))?;
    println!(
        "{}/{} trials succeeded; frequencies in {}",
        successes.len(),
        args.trials,
        args.out.join("frequency.csv").display()
    );
    Ok(())
}

fn failure_json(trial: &usize, seed: u64, e: &SearchError) -> serde_json::Value {
    json!({ "trial": trial, "seed": seed, "error": e.to_string(), "trace": e.trace() })
}

fn print_result(trial: Option<usize>, r: &mshc_core::SearchResult) {
    let prefix = trial.map(|t| format!("trial {t}: ")).unwrap_or_default();
    println!(
        "{prefix}circuit of {} heads from {} candidates; S(M) = {:.4}, S(B) = {:.4}, threshold = {:.4}, oracle calls = {}",
        r.circuit.len(),
        r.initial_candidates().len(),
        r.full_score,
        r.baseline_score,
        r.threshold,
        r.oracle_calls
    );
}

pub fn theory(args: &TheoryArgs) -> Result<(), CliError> {
    let models = theory_grid(args)?;
    let mut manifest = RunManifest::new("theory", &args.out);
    manifest.parameters = json!({
        "reps": args.reps,
        "seed": args.seed,
        "cells": models.len(),
        "grid": models,
    });
    manifest.write(&args.out.join(MANIFEST_FILE))?;
    let rows = theory::run_grid(&models, args.reps, args.seed)?;
    let file = File::create(args.out.join("grid.csv"))?;
    theory::write_grid_csv(BufWriter::new(file), &rows)?;
    let violations: Vec<_> = rows.iter().filter(|r| r.exact > r.hoeffding).collect();
    let inside = rows.iter().filter(|r| r.exact_in_interval()).count();
    println!(
        "{} cells: exact <= hoeffding in {}, exact inside the Wilson interval in {}",
        rows.len(),
        rows.len() - violations.len(),
        inside
    );
    if let Some(r) = violations.first() {
        return Err(CliError::Other(anyhow::anyhow!(
            "exact miss probability {:e} exceeds the Hoeffding bound {:e} at K={}, N={}",
            r.exact,
            r.hoeffding,
            r.model.subset_size,
            r.model.samples
        )));
    }
    Ok(())
}

fn theory_grid(args: &TheoryArgs) -> Result<Vec<ContaminationModel>, CliError> {
    let all_empty = args.ks.is_empty()
        && args.ns.is_empty()
        && args.delta_i.is_empty()
        && args.delta_t.is_empty()
        && args.sizes.is_empty();
    if all_empty {
        return Ok(theory::default_grid());
    }
    fn or<T: Clone>(v: &[T], d: &[T]) -> Vec<T> {
        if v.is_empty() {
            d.to_vec()
        } else {
            v.to_vec()
        }
    }
    Ok(theory::grid(
        &or(&args.ks, &[5, 10]),
        &or(&args.ns, &[1, 5, 10]),
        &or(&args.delta_i, &[0.3, 0.5]),
        &or(&args.delta_t, &[0.1, 0.2]),
        &or(&args.sizes, &[200]),
    )?)
}

pub fn overlap(args: &OverlapArgs) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    for raw in &args.inputs {
        let (name, path) = match raw.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(raw);
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| raw.clone());
                (stem, p)
            }
        };
        inputs.push((name, path));
    }
    let names: Vec<&String> = inputs.iter().map(|(n, _)| n).collect();
    let clash: Vec<bool> = names
        .iter()
        .map(|n| names.iter().filter(|m| *m == n).count() > 1)
        .collect();
    for ((name, path), clash) in inputs.iter_mut().zip(clash) {
        if clash {
            *name = path.display().to_string();
        }
    }
    let mut manifest = RunManifest::new("overlap", &args.out);
    manifest.dataset = json!(inputs
        .iter()
        .map(|(n, p)| json!({ "name": n, "path": p }))
        .collect::<Vec<_>>());
    manifest.parameters = json!({ "thresholds": args.thresholds, "rule": format!("{:?}", args.rule) });
    manifest.write(&args.out.join(MANIFEST_FILE))?;

    let tasks: Vec<(String, SelectionFrequency)> = inputs
        .into_iter()
        .map(|(n, p)| analysis::read_heatmap(&p).map(|f| (n, f)))
        .collect::<Result<_, _>>()?;
    let report = analysis::overlap_matrix_with(&tasks, &args.thresholds, args.rule.into())?;
    let value = serde_json::to_value(&report).map_err(anyhow::Error::from)?;
    write_with_manifest_ref(&args.out.join("overlap.json"), value, MANIFEST_FILE)?;
    for (i, q) in report.thresholds.iter().enumerate() {
        let m = report.matrix(i);
        let off: Vec<String> = report
            .pairs
            .iter()
            .filter(|p| p.threshold == *q)
            .map(|p| format!("{}/{} {:.3}", p.a, p.b, p.jaccard))
            .collect();
        println!("q = {q}: {} ({}x{})", off.join(", "), m.len(), m.len());
    }
    Ok(())
}
