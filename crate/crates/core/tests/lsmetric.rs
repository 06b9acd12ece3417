use mshc_core::lsmetric::{fit_projection, ls_score, primal_objective, train_svm};
use mshc_core::LabeledEmbeddings;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Thirty points built from fixed trigonometric formulas.
fn trig30() -> LabeledEmbeddings {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..30 {
        let y: i8 = if i % 2 == 0 { 1 } else { -1 };
        let (fi, fy) = (i as f64, f64::from(y));
        rows.push(vec![
            2.0 * (1.3 * fi).sin() + 0.8 * fy,
            1.5 * (0.7 * fi).cos() - 0.4 * fy,
            0.5 * (0.31 * fi * fi).sin(),
        ]);
        labels.push(y);
    }
    LabeledEmbeddings::from_rows(&rows, labels).unwrap()
}

#[test]
fn svm_matches_interior_point_reference() {
    // Optimal primal objectives from an interior-point solve of
    // ½‖w‖² + C Σ max(0, 1 − y(w·x + b)) at tolerance 1e-12.
    let data = trig30();
    for (c, reference) in [(10.0, 170.94238551435063), (0.5, 8.92139381197795)] {
        let model = train_svm(&data, c).unwrap();
        let primal = model.primal_objective(&data);
        assert!(
            (primal - reference).abs() <= 1e-6 * reference,
            "C={c}: {primal} vs {reference}"
        );
        assert!(primal + 1e-9 >= model.dual_objective());
        assert!(primal - model.dual_objective() <= 1e-6 * reference);
    }
    let model = train_svm(&data, 10.0).unwrap();
    assert!((model.accuracy(&data) - 22.0 / 30.0).abs() < 1e-12);
    // perturbing the solution cannot improve the objective
    let w = model.weights().to_vec();
    let base = primal_objective(&w, model.bias(), 10.0, &data);
    for (i, delta) in [(0, 1e-3), (1, -1e-3), (2, 1e-3)] {
        let mut w2 = w.clone();
        w2[i] += delta;
        assert!(primal_objective(&w2, model.bias(), 10.0, &data) >= base - 1e-9);
    }
    assert!(primal_objective(&w, model.bias() + 1e-3, 10.0, &data) >= base - 1e-9);
}

/// Cyclic Jacobi eigenvalue iteration on a dense symmetric matrix.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|k| (0..n).map(|i| v[i][k]).collect()).collect();
    (values, vectors)
}

fn random_data(seed: u64, n: usize, d: usize) -> LabeledEmbeddings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // anisotropic scales keep the eigenvalues well separated
    let data: Vec<f64> = (0..n * d)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (1.0 + (i % d) as f64)
        })
        .collect();
    let labels = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    LabeledEmbeddings::new(data, d, labels).unwrap()
}

fn check_against_jacobi(data: &LabeledEmbeddings, dim: usize) {
    let (n, d) = (data.rows(), data.cols());
    let mean: Vec<f64> = (0..d)
        .map(|j| data.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    data.iter_rows()
                        .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
                        .sum::<f64>()
                        / n as f64
                })
                .collect()
        })
        .collect();
    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let proj = fit_projection(data, dim).unwrap();
    for (k, &idx) in order.iter().take(dim).enumerate() {
        let ev = proj.explained_variance()[k];
        assert!(
            (ev - values[idx]).abs() <= 1e-8 * values[order[0]],
            "eigenvalue {k}: {ev} vs {}",
            values[idx]
        );
        let dot: f64 = proj.basis()[k].iter().zip(&vectors[idx]).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-7, "component {k}: |cos| = {}", dot.abs());
    }
}

#[test]
fn pca_matches_jacobi_tall() {
    for seed in 0..5 {
        check_against_jacobi(&random_data(seed, 40, 6), 5);
    }
}

#[test]
fn pca_matches_jacobi_wide() {
    // n < d exercises the Gram-matrix path
    for seed in 0..5 {
        check_against_jacobi(&random_data(100 + seed, 8, 12), 5);
    }
}

fn transform(data: &LabeledEmbeddings, f: impl Fn(&[f64]) -> Vec<f64>) -> LabeledEmbeddings {
    let rows: Vec<Vec<f64>> = data.iter_rows().map(f).collect();
    LabeledEmbeddings::from_rows(&rows, data.labels().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn score_invariant_to_translation_and_scaling(seed in 0u64..10_000, shift in -50.0f64..50.0, scale in 0.1f64..20.0) {
        let data = random_data(seed, 24, 6);
        let a = ls_score(&data, 5, 10.0).unwrap();
        let moved = transform(&data, |r| r.iter().map(|x| x * scale + shift).collect());
        let b = ls_score(&moved, 5, 10.0).unwrap();
        // a uniform rescale changes the effective C, so only translation is exact
        let translated = transform(&data, |r| r.iter().map(|x| x + shift).collect());
        prop_assert!((ls_score(&translated, 5, 10.0).unwrap() - a).abs() <= 1e-6);
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn score_invariant_to_coordinate_permutation(seed in 0u64..10_000, rot in 0usize..6) {
        let data = random_data(seed, 24, 6);
        let a = ls_score(&data, 5, 10.0).unwrap();
        let permuted = transform(&data, |r| (0..6).map(|j| r[(j + rot) % 6]).collect());
        prop_assert!((ls_score(&permuted, 5, 10.0).unwrap() - a).abs() <= 1e-6);
    }

    #[test]
    fn score_is_a_fraction_of_rows(seed in 0u64..10_000) {
        let data = random_data(seed, 20, 4);
        let s = ls_score(&data, 3, 10.0).unwrap();
        let scaled = s * 20.0;
        // the hinge optimum can misclassify more than half the rows, so no lower bound
        prop_assert!((scaled - scaled.round()).abs() < 1e-9 && (0.0..=1.0).contains(&s));
    }

    #[test]
    fn solver_closes_duality_gap_at_large_scale(seed in 0u64..10_000, scale in 1.0f64..200.0) {
        let data = random_data(seed, 60, 5);
        let big = transform(&data, |r| r.iter().map(|x| x * scale).collect());
        let model = train_svm(&big, 10.0).unwrap();
        let primal = model.primal_objective(&big);
        prop_assert!(primal + 1e-9 * (1.0 + primal) >= model.dual_objective());
        prop_assert!(primal - model.dual_objective() <= 1e-6 * (1.0 + primal), "gap {}", primal - model.dual_objective());
    }
}
