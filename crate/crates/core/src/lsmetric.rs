//! Low-dimensional linear separability.
//!
//! Center the embeddings, project onto the top `D ≤ 5` principal directions,
//! fit a soft-margin linear SVM (hinge loss, `C = 10` by default) and report
//! training accuracy.
//!
//! The SVM is solved through its dual with a primal-dual interior-point
//! method. The Newton systems are diagonal plus rank `d`, so each step costs
//! `O(n·d²)`. The bias is then recovered by an exact line search on the
//! primal hinge objective, so the returned `(w, b)` is a primal optimum up to
//! the dual stopping tolerance.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::embeddings::{EmbeddingError, LabeledEmbeddings};

pub const MAX_DIM: usize = 5;
pub const DEFAULT_DIM: usize = 5;
pub const DEFAULT_C: f64 = 10.0;

const IPM_TOLERANCE: f64 = 1e-12;
const IPM_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LsError {
    #[error("projection dimension {dim} not in 1..={max}")]
    Dimension { dim: usize, max: usize },
    #[error("rank deficient: requested {dim} components but data has rank {rank}")]
    RankDeficient { dim: usize, rank: usize },
    #[error("need at least one example of each label (got {positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("regularization C must be positive and finite, got {0}")]
    Regularization(f64),
    #[error(transparent)]
    Data(#[from] EmbeddingError),
}

/// Centering vector plus an orthonormal basis of the top principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    mean: Vec<f64>,
    /// One entry per component, each of length `d`.
    basis: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
}

impl Projection {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Eigenvalues of the covariance matrix for the retained components, non-increasing.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|v| v.iter().zip(row).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }

    /// Maps each row to `Wᵀ(h − h̄)`; labels pass through.
    pub fn project(&self, data: &LabeledEmbeddings) -> Result<LabeledEmbeddings, LsError> {
        if data.cols() != self.mean.len() {
            return Err(LsError::DimensionMismatch {
                expected: self.mean.len(),
                actual: data.cols(),
            });
        }
        let projected = data.iter_rows().flat_map(|r| self.project_row(r)).collect();
        Ok(LabeledEmbeddings::new(projected, self.dim(), data.labels().to_vec())?)
    }

    /// `basis · h̃ + mean`.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, v) in coords.iter().zip(&self.basis) {
            for (o, a) in out.iter_mut().zip(v) {
                *o += c * a;
            }
        }
        out
    }
}

/// Top-`dim` principal directions of `(1/n)·Σ (h − h̄)(h − h̄)ᵀ`.
///
/// Uses the `d × d` covariance when `n ≥ d`, otherwise the `n × n` Gram
/// matrix of centered rows mapped back through `Xᵀu / √(nλ)`.
pub fn fit_projection(data: &LabeledEmbeddings, dim: usize) -> Result<Projection, LsError> {
    let (n, d) = (data.rows(), data.cols());
    let max = MAX_DIM.min(n.saturating_sub(1)).min(d);
    if dim == 0 || dim > max {
        return Err(LsError::Dimension { dim, max });
    }

    let mut mean = vec![0.0; d];
    for row in data.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| data.row(i)[j] - mean[j]);

    let mut components: Vec<(f64, Vec<f64>)> = if n >= d {
        let cov = centered.transpose() * &centered / n as f64;
        let eig = SymmetricEigen::new(cov);
        (0..d)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
            .collect()
    } else {
        let gram = &centered * centered.transpose() / n as f64;
        let eig = SymmetricEigen::new(gram);
        (0..n)
            .map(|k| {
                let lambda = eig.eigenvalues[k];
                let u = eig.eigenvectors.column(k);
                let v = centered.transpose() * u;
                let norm = v.norm();
                let v = if norm > 0.0 { v / norm } else { v };
                (lambda, v.iter().copied().collect())
            })
            .collect()
    };

    for (_, v) in &mut components {
        normalize_sign(v);
    }
    sort_components(&mut components);

    let top = components[0].0.max(0.0);
    let tol = top * 1e-10 + f64::MIN_POSITIVE;
    let rank = components.iter().take_while(|(l, _)| *l > tol).count();
    if rank < dim {
        return Err(LsError::RankDeficient { dim, rank });
    }
    components.truncate(dim);

    let (explained_variance, mut basis): (Vec<f64>, Vec<Vec<f64>>) = components.into_iter().unzip();
    orthonormalize(&mut basis);
    Ok(Projection {
        mean,
        basis,
        explained_variance,
    })
}

/// Flip so the entry of largest magnitude (first on ties) is non-negative.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dominant_coordinate(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Descending eigenvalue; runs of numerically tied eigenvalues are ordered by
/// the coordinate index of each vector's dominant entry.
fn sort_components(components: &mut [(f64, Vec<f64>)]) {
    components.sort_by(|a, b| b.0.total_cmp(&a.0));
    let scale = components.first().map_or(0.0, |c| c.0.abs());
    let tie = scale * 1e-12;
    let mut start = 0;
    while start < components.len() {
        let mut end = start + 1;
        while end < components.len() && (components[end - 1].0 - components[end].0).abs() <= tie {
            end += 1;
        }
        components[start..end].sort_by_key(|(_, v)| dominant_coordinate(v));
        start = end;
    }
}

fn orthonormalize(basis: &mut [Vec<f64>]) {
    for i in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(i);
        let v = &mut rest[0];
        for u in done.iter() {
            let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, a)| *x -= dot * a);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// `sign(wᵀh + b)` classifier; a zero margin predicts `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: Vec<f64>,
    bias: f64,
    regularization: f64,
    dual_objective: f64,
}

impl LinearClassifier {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// Dual objective `Σα − ½‖w‖²` at the solver's final iterate; a lower bound on the primal optimum.
    pub fn dual_objective(&self) -> f64 {
        self.dual_objective
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn predict(&self, row: &[f64]) -> i8 {
        if self.decision(row) >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn accuracy(&self, data: &LabeledEmbeddings) -> f64 {
        let correct = data
            .iter_rows()
            .zip(data.labels())
            .filter(|(r, &y)| self.predict(r) == y)
            .count();
        correct as f64 / data.rows() as f64
    }

    /// `½‖w‖² + C·Σ max(0, 1 − yᵢ(wᵀhᵢ + b))`
    pub fn primal_objective(&self, data: &LabeledEmbeddings) -> f64 {
        primal_objective(&self.weights, self.bias, self.regularization, data)
    }
}

pub fn primal_objective(weights: &[f64], bias: f64, c: f64, data: &LabeledEmbeddings) -> f64 {
    let reg = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    let hinge: f64 = data
        .iter_rows()
        .zip(data.labels())
        .map(|(r, &y)| {
            let s: f64 = weights.iter().zip(r).map(|(w, x)| w * x).sum::<f64>() + bias;
            (1.0 - f64::from(y) * s).max(0.0)
        })
        .sum();
    reg + c * hinge
}

/// Soft-margin linear SVM; the bias is not regularized.
pub fn train_svm(data: &LabeledEmbeddings, c: f64) -> Result<LinearClassifier, LsError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(LsError::Regularization(c));
    }
    let (positives, negatives) = data.label_counts();
    if positives == 0 || negatives == 0 {
        return Err(LsError::DegenerateLabels { positives, negatives });
    }
    let y: Vec<f64> = data.labels().iter().map(|&l| f64::from(l)).collect();
    let alpha = solve_dual(data, &y, c);
    let w = weights_from_alpha(data, &alpha, &y);
    let bias = optimal_bias(data, &w, positives);
    let dual_objective = alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w);
    Ok(LinearClassifier {
        weights: w,
        bias,
        regularization: c,
        dual_objective,
    })
}

/// Solves `(Σ + ZZᵀ) x = v` with `Z = diag(y)·X`, either through the
/// Woodbury identity (a `d × d` system) or densely when `n ≤ d`.
struct NewtonSystem {
    sigma: Vec<f64>,
    small: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    woodbury: bool,
}

impl NewtonSystem {
    fn new(z: &DMatrix<f64>, sigma: Vec<f64>) -> Self {
        let (n, d) = z.shape();
        let woodbury = d < n;
        let small = if woodbury {
            let scaled = DMatrix::from_fn(n, d, |i, k| z[(i, k)] / sigma[i]);
            let mut m = z.transpose() * scaled;
            for k in 0..d {
                m[(k, k)] += 1.0;
            }
            m.lu()
        } else {
            let mut m = z * z.transpose();
            for i in 0..n {
                m[(i, i)] += sigma[i];
            }
            m.lu()
        };
        Self { sigma, small, woodbury }
    }

    fn solve(&self, z: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        if self.woodbury {
            let sv: Vec<f64> = v.iter().zip(&self.sigma).map(|(a, s)| a / s).collect();
            let rhs = z.tr_mul(&nalgebra::DVector::from_column_slice(&sv));
            let t = self
                .small
                .solve(&rhs)
                .unwrap_or_else(|| nalgebra::DVector::zeros(rhs.len()));
            let zt = z * t;
            sv.iter()
                .zip(zt.iter())
                .zip(&self.sigma)
                .map(|((a, b), s)| a - b / s)
                .collect()
        } else {
            let rhs = nalgebra::DVector::from_column_slice(v);
            self.small
                .solve(&rhs)
                .map(|x| x.as_slice().to_vec())
                .unwrap_or_else(|| vec![0.0; v.len()])
        }
    }
}

/// Dual QP `min ½αᵀQα − 1ᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ C`, `Q = ZZᵀ`, by a
/// Mehrotra predictor-corrector interior-point method.
fn solve_dual(data: &LabeledEmbeddings, y: &[f64], c: f64) -> Vec<f64> {
    let n = data.rows();
    let z = DMatrix::from_fn(n, data.cols(), |i, k| y[i] * data.row(i)[k]);
    let q_times = |a: &[f64]| -> Vec<f64> {
        let za = z.tr_mul(&nalgebra::DVector::from_column_slice(a));
        (&z * za).as_slice().to_vec()
    };

    let mut alpha = vec![0.5 * c; n];
    let mut lo = vec![1.0; n];
    let mut hi = vec![1.0; n];
    let mut nu = 0.0;
    let mut best = (alpha.clone(), f64::INFINITY);

    for _ in 0..IPM_MAX_ITER {
        let qa = q_times(&alpha);
        let slack: Vec<f64> = alpha.iter().map(|a| c - a).collect();
        let r_dual: Vec<f64> = (0..n).map(|i| qa[i] - 1.0 + y[i] * nu - lo[i] + hi[i]).collect();
        let r_prim = dot(y, &alpha);
        let gap: f64 = (0..n).map(|i| alpha[i] * lo[i] + slack[i] * hi[i]).sum();
        let objective = 0.5 * dot(&alpha, &qa) - alpha.iter().sum::<f64>();
        let (_, true_gap) = recovered_gap(data, y, &alpha, c);
        if true_gap < best.1 {
            best = (alpha.clone(), true_gap);
        }
        if true_gap <= IPM_TOLERANCE * (1.0 + objective.abs()) || gap <= f64::EPSILON * (1.0 + objective.abs()) {
            break;
        }
        let near = gap <= 1e-6 * (1.0 + objective.abs());
        if let Some(exact) = near.then(|| crossover(data, y, c, &alpha, &lo, &hi)).flatten() {
            let (_, exact_gap) = recovered_gap(data, y, &exact, c);
            if exact_gap < best.1 {
                best = (exact, exact_gap);
            }
            if best.1 <= IPM_TOLERANCE * (1.0 + objective.abs()) {
                break;
            }
        }
        let mu = gap / (2 * n) as f64;
        let sigma: Vec<f64> = (0..n).map(|i| lo[i] / alpha[i] + hi[i] / slack[i]).collect();
        let system = NewtonSystem::new(&z, sigma);
        let m_inv_y = system.solve(&z, y);
        let y_m_y = dot(y, &m_inv_y);

        // comp_lo/comp_hi are the right-hand sides of the linearized complementarity rows
        let direction = |comp_lo: &[f64], comp_hi: &[f64]| {
            let rhs: Vec<f64> = (0..n)
                .map(|i| -r_dual[i] + comp_lo[i] / alpha[i] - comp_hi[i] / slack[i])
                .collect();
            let m_inv_r = system.solve(&z, &rhs);
            let d_nu = (dot(y, &m_inv_r) + r_prim) / y_m_y;
            let d_alpha: Vec<f64> = (0..n).map(|i| m_inv_r[i] - d_nu * m_inv_y[i]).collect();
            let d_lo: Vec<f64> = (0..n).map(|i| (comp_lo[i] - lo[i] * d_alpha[i]) / alpha[i]).collect();
            let d_hi: Vec<f64> = (0..n).map(|i| (comp_hi[i] + hi[i] * d_alpha[i]) / slack[i]).collect();
            (d_alpha, d_nu, d_lo, d_hi)
        };
        let step_to_boundary = |d_alpha: &[f64], d_lo: &[f64], d_hi: &[f64]| {
            let mut step = 1.0f64;
            for i in 0..n {
                for (v, dv) in [
                    (alpha[i], d_alpha[i]),
                    (slack[i], -d_alpha[i]),
                    (lo[i], d_lo[i]),
                    (hi[i], d_hi[i]),
                ] {
                    if dv < 0.0 {
                        step = step.min(-v / dv);
                    }
                }
            }
            step
        };

        let comp_lo: Vec<f64> = (0..n).map(|i| -alpha[i] * lo[i]).collect();
        let comp_hi: Vec<f64> = (0..n).map(|i| -slack[i] * hi[i]).collect();
        let (a_aff, _, lo_aff, hi_aff) = direction(&comp_lo, &comp_hi);
        let step = step_to_boundary(&a_aff, &lo_aff, &hi_aff);
        let gap_aff: f64 = (0..n)
            .map(|i| {
                (alpha[i] + step * a_aff[i]) * (lo[i] + step * lo_aff[i])
                    + (slack[i] - step * a_aff[i]) * (hi[i] + step * hi_aff[i])
            })
            .sum();
        let centering = (gap_aff / gap).powi(3);

        let comp_lo: Vec<f64> = (0..n)
            .map(|i| centering * mu - alpha[i] * lo[i] - a_aff[i] * lo_aff[i])
            .collect();
        let comp_hi: Vec<f64> = (0..n)
            .map(|i| centering * mu - slack[i] * hi[i] + a_aff[i] * hi_aff[i])
            .collect();
        let (d_alpha, d_nu, d_lo, d_hi) = direction(&comp_lo, &comp_hi);
        let step = (0.995 * step_to_boundary(&d_alpha, &d_lo, &d_hi)).min(1.0);
        let finite = d_alpha.iter().chain(&d_lo).chain(&d_hi).all(|v| v.is_finite()) && d_nu.is_finite();
        if !finite || step <= 0.0 {
            break;
        }
        for i in 0..n {
            alpha[i] += step * d_alpha[i];
            lo[i] += step * d_lo[i];
            hi[i] += step * d_hi[i];
        }
        nu += step * d_nu;
    }
    let (_, true_gap) = recovered_gap(data, y, &alpha, c);
    if true_gap < best.1 {
        alpha
    } else {
        best.0
    }
}

/// Guesses which multipliers sit at `0`, at `C` or strictly between from an
/// interior iterate, then solves the KKT equalities of that face exactly:
/// `w = Σ αᵢyᵢhᵢ`, `yᵢ(wᵀhᵢ + b) = 1` on the free set, `yᵀα = 0`.
fn crossover(data: &LabeledEmbeddings, y: &[f64], c: f64, alpha: &[f64], lo: &[f64], hi: &[f64]) -> Option<Vec<f64>> {
    let (n, d) = (data.rows(), data.cols());
    let mut exact = vec![0.0; n];
    let mut free = Vec::new();
    for i in 0..n {
        if lo[i] > alpha[i] {
            exact[i] = 0.0;
        } else if hi[i] > c - alpha[i] {
            exact[i] = c;
        } else {
            free.push(i);
        }
    }
    let m = free.len();
    let size = d + 1 + m;
    let mut a = DMatrix::zeros(size, size);
    let mut rhs = nalgebra::DVector::zeros(size);
    let bound_w = weights_from_alpha(data, &exact, y);
    for k in 0..d {
        a[(k, k)] = 1.0;
        rhs[k] = bound_w[k];
        for (col, &i) in free.iter().enumerate() {
            a[(k, d + 1 + col)] = -y[i] * data.row(i)[k];
        }
    }
    for (col, &i) in free.iter().enumerate() {
        let row = d + col;
        for k in 0..d {
            a[(row, k)] = data.row(i)[k];
        }
        a[(row, d)] = 1.0;
        rhs[row] = y[i];
    }
    for (col, &i) in free.iter().enumerate() {
        a[(d + m, d + 1 + col)] = y[i];
    }
    rhs[d + m] = -dot(y, &exact);
    let solution = a.lu().solve(&rhs)?;
    for (col, &i) in free.iter().enumerate() {
        let v = solution[d + 1 + col];
        if !v.is_finite() {
            return None;
        }
        exact[i] = v.clamp(0.0, c);
    }
    Some(exact)
}

/// Primal objective at `w = Zᵀα` with the exact bias, minus the dual objective.
fn recovered_gap(data: &LabeledEmbeddings, y: &[f64], alpha: &[f64], c: f64) -> (Vec<f64>, f64) {
    let w = weights_from_alpha(data, alpha, y);
    let positives = y.iter().filter(|&&v| v > 0.0).count();
    let primal = primal_objective(&w, optimal_bias(data, &w, positives), c, data);
    let dual = alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w);
    let gap = primal - dual;
    (w, if gap.is_finite() { gap } else { f64::INFINITY })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weights_from_alpha(data: &LabeledEmbeddings, alpha: &[f64], y: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; data.cols()];
    for (t, row) in data.iter_rows().enumerate() {
        if alpha[t] != 0.0 {
            for (wk, x) in w.iter_mut().zip(row) {
                *wk += alpha[t] * y[t] * x;
            }
        }
    }
    w
}

/// Minimizer of `b ↦ Σ max(0, 1 − yᵢ(sᵢ + b))` for fixed scores `sᵢ = wᵀhᵢ`.
///
/// Every hinge has its kink at `yᵢ − sᵢ` and each kink raises the slope by
/// one, starting from `−n₊`; the objective is flat between the `n₊`-th and
/// `(n₊+1)`-th sorted kinks and the midpoint of that interval is returned.
fn optimal_bias(data: &LabeledEmbeddings, w: &[f64], positives: usize) -> f64 {
    let mut kinks: Vec<f64> = data
        .iter_rows()
        .zip(data.labels())
        .map(|(r, &y)| f64::from(y) - dot(w, r))
        .collect();
    kinks.sort_by(f64::total_cmp);
    0.5 * (kinks[positives - 1] + kinks[positives])
}

/// Training accuracy of the projected linear SVM on the full batch.
pub fn ls_score(data: &LabeledEmbeddings, dim: usize, c: f64) -> Result<f64, LsError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(LsError::Dimension { dim, max: MAX_DIM });
    }
    let (positives, negatives) = data.label_counts();
    if positives == 0 || negatives == 0 {
        return Err(LsError::DegenerateLabels { positives, negatives });
    }
    let projection = fit_projection(data, dim)?;
    let projected = projection.project(data)?;
    let classifier = train_svm(&projected, c)?;
    Ok(classifier.accuracy(&projected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[&[f64]], labels: &[i8]) -> LabeledEmbeddings {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        LabeledEmbeddings::from_rows(&rows, labels.to_vec()).unwrap()
    }

    #[test]
    fn diagonal_line_projects_onto_diagonal() {
        let data = emb(
            &[&[-2.0, -2.0], &[-1.0, -1.0], &[0.5, 0.5], &[3.0, 3.0]],
            &[1, -1, 1, -1],
        );
        let p = fit_projection(&data, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.basis()[0][0] - s).abs() < 1e-12);
        assert!((p.basis()[0][1] - s).abs() < 1e-12);
    }

    #[test]
    fn mean_projects_to_zero() {
        let data = emb(
            &[&[1.0, 0.0, 2.0], &[0.0, 3.0, 1.0], &[4.0, 1.0, 0.0], &[2.0, 2.0, 2.0]],
            &[1, -1, 1, -1],
        );
        let p = fit_projection(&data, 2).unwrap();
        assert!(p.project_row(p.mean()).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn one_hot_rows_match_manual_product() {
        // 4 one-hot rows in 4-D: centered rows are e_i - 1/4; covariance (1/4)(I - J/4)
        // has eigenvalue 1/4 on the 3-D space orthogonal to 1 (tied).
        let data = emb(
            &[
                &[1.0, 0.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0, 0.0],
                &[0.0, 0.0, 1.0, 0.0],
                &[0.0, 0.0, 0.0, 1.0],
            ],
            &[1, -1, 1, -1],
        );
        let p = fit_projection(&data, 2).unwrap();
        assert!((p.explained_variance()[0] - 0.25).abs() < 1e-12);
        assert!((p.explained_variance()[1] - 0.25).abs() < 1e-12);
        let projected = p.project(&data).unwrap();
        for i in 0..4 {
            for k in 0..2 {
                let manual: f64 = (0..4)
                    .map(|j| p.basis()[k][j] * (if i == j { 1.0 } else { 0.0 } - 0.25))
                    .sum();
                assert!((projected.row(i)[k] - manual).abs() < 1e-12);
            }
        }
        // each basis vector is orthogonal to the all-ones direction
        for v in p.basis() {
            assert!(v.iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn rank_and_dimension_errors() {
        let data = emb(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]], &[1, -1, 1]);
        assert!(matches!(
            fit_projection(&data, 2),
            Err(LsError::RankDeficient { dim: 2, rank: 1 })
        ));
        assert!(matches!(fit_projection(&data, 3), Err(LsError::Dimension { .. })));
        assert!(matches!(fit_projection(&data, 0), Err(LsError::Dimension { .. })));
        let wide = LabeledEmbeddings::new(vec![0.5; 20 * 10], 10, [1, -1].repeat(10)).unwrap();
        assert!(matches!(
            ls_score(&wide, 6, 10.0),
            Err(LsError::Dimension { dim: 6, max: 5 })
        ));
    }

    #[test]
    fn project_checks_dimension() {
        let data = emb(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, 1.0]], &[1, -1, 1]);
        let p = fit_projection(&data, 1).unwrap();
        let other = emb(&[&[1.0, 0.0, 0.0]], &[1]);
        assert!(matches!(
            p.project(&other),
            Err(LsError::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn symmetric_one_dimensional_svm() {
        let data = emb(&[&[-1.0], &[-1.0], &[1.0], &[1.0]], &[-1, -1, 1, 1]);
        let clf = train_svm(&data, 10.0).unwrap();
        assert!(clf.bias().abs() < 1e-9);
        assert!((clf.weights()[0] - 1.0).abs() < 1e-9);
        assert_eq!(clf.accuracy(&data), 1.0);
    }

    #[test]
    fn identical_points_cannot_separate() {
        let n = 8;
        let data = LabeledEmbeddings::new(vec![0.3; n * 2], 2, [1, -1].repeat(n / 2)).unwrap();
        let clf = train_svm(&data, 10.0).unwrap();
        assert!(clf.weights().iter().all(|w| w.abs() < 1e-12));
        assert_eq!(clf.accuracy(&data), 0.5);
        // hinge at w = 0, |b| ≤ 1 with balanced labels is C·n
        assert!((clf.primal_objective(&data) - 10.0 * n as f64).abs() < 1e-9);
    }

    #[test]
    fn single_class_rejected() {
        let data = emb(&[&[0.0], &[1.0]], &[1, 1]);
        assert!(matches!(train_svm(&data, 10.0), Err(LsError::DegenerateLabels { .. })));
        assert!(matches!(
            train_svm(&emb(&[&[0.0], &[1.0]], &[1, -1]), 0.0),
            Err(LsError::Regularization(_))
        ));
    }

    #[test]
    fn xor_is_not_separable() {
        let data = emb(
            &[&[1.0, 1.0], &[-1.0, -1.0], &[1.0, -1.0], &[-1.0, 1.0]],
            &[1, 1, -1, -1],
        );
        assert!(ls_score(&data, 2, 10.0).unwrap() <= 0.75);
    }
}
