use std::path::Path;

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::profile::{profile_distances, OfficeProfile};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub dims: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_steps: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 4.0,
            dims: 2,
            iterations: 1000,
            learning_rate: 100.0,
            exaggeration: 4.0,
            exaggeration_steps: 100,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// One row per point.
    pub embedding: Array2<f64>,
    /// `(iteration, KL(P||Q))` every 50 iterations.
    pub kl_trace: Vec<(usize, f64)>,
}

pub const KL_EVERY: usize = 50;

/// Row-wise Gaussian affinities, each row calibrated to the target
/// perplexity by bisection on the precision.
fn conditional_probabilities(sq_distances: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = sq_distances.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        let mut row = vec![0.0; n];
        for _ in 0..200 {
            let dmin = (0..n)
                .filter(|&j| j != i)
                .map(|j| sq_distances[[i, j]])
                .fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] = if j == i {
                    0.0
                } else {
                    (-(sq_distances[[i, j]] - dmin) * beta).exp()
                };
                sum += row[j];
                weighted += row[j] * (sq_distances[[i, j]] - dmin);
            }
            // Shannon entropy of the normalized row in nats.
            let entropy = sum.ln() + beta * weighted / sum;
            for v in row.iter_mut() {
                *v /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < 1e-10 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    p
}

/// Symmetrized affinities normalized to sum 1.
pub fn joint_probabilities(sq_distances: &Array2<f64>, perplexity: f64) -> Result<Array2<f64>> {
    let n = sq_distances.nrows();
    if sq_distances.ncols() != n {
        return Err(Error::Dimension("distance matrix must be square".into()));
    }
    let p = conditional_probabilities(sq_distances, perplexity);
    Ok((&p + &p.t()) / (2.0 * n as f64))
}

/// Fills the unnormalized Student-t affinities and returns their sum.
fn student_affinities(y: &Array2<f64>, q_num: &mut Array2<f64>) -> f64 {
    let n = y.nrows();
    let mut q_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                0.0
            } else {
                let d2: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                1.0 / (1.0 + d2)
            };
            q_num[[i, j]] = v;
            q_sum += v;
        }
    }
    q_sum
}

fn kl_divergence(p: &Array2<f64>, q_num: &Array2<f64>, q_sum: f64) -> f64 {
    let mut kl = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j && pij > 0.0 {
            let q = (q_num[[i, j]] / q_sum).max(1e-300);
            kl += pij * (pij / q).ln();
        }
    }
    kl
}

/// Exact t-SNE on a matrix of squared input distances.
pub fn tsne(sq_distances: &Array2<f64>, params: &TsneParams) -> Result<TsneResult> {
    let n = sq_distances.nrows();
    if n < 4 {
        return Err(Error::Invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if !(params.perplexity > 0.0 && params.perplexity < (n as f64 - 1.0) / 3.0) {
        return Err(Error::Config(format!(
            "perplexity {} infeasible for {n} points (must be below {})",
            params.perplexity,
            (n as f64 - 1.0) / 3.0
        )));
    }
    if params.dims == 0 || params.learning_rate <= 0.0 {
        return Err(Error::Config("t-SNE needs positive dims and learning rate".into()));
    }
    let p = joint_probabilities(sq_distances, params.perplexity)?;
    let dims = params.dims;
    let mut rng = util::stream_rng(params.seed, 0);
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Array2<f64> = Array2::from_shape_simple_fn((n, dims), || normal.sample(&mut rng));
    let mut update: Array2<f64> = Array2::zeros((n, dims));
    let mut gains: Array2<f64> = Array2::ones((n, dims));
    let mut q_num: Array2<f64> = Array2::zeros((n, n));
    let mut kl_trace = Vec::new();

    for it in 0..params.iterations {
        let exaggerate = if it < params.exaggeration_steps { params.exaggeration } else { 1.0 };
        let momentum = if it < params.momentum_switch { params.momentum } else { params.final_momentum };
        let q_sum = student_affinities(&y, &mut q_num);
        if it % KL_EVERY == 0 {
            kl_trace.push((it, kl_divergence(&p, &q_num, q_sum)));
        }
        let mut grad: Array2<f64> = Array2::zeros((n, dims));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let coeff = 4.0 * (exaggerate * p[[i, j]] - q_num[[i, j]] / q_sum) * q_num[[i, j]];
                for k in 0..dims {
                    grad[[i, k]] += coeff * (y[[i, k]] - y[[j, k]]);
                }
            }
        }
        ndarray::Zip::from(&mut gains)
            .and(&grad)
            .and(&update)
            .for_each(|g, &dy, &u| {
                *g = if (dy > 0.0) != (u > 0.0) { *g + 0.2 } else { (*g * 0.8).max(0.01) };
            });
        ndarray::Zip::from(&mut update)
            .and(&gains)
            .and(&grad)
            .for_each(|u, &g, &dy| *u = momentum * *u - params.learning_rate * g * dy);
        y += &update;
        let mean = y.mean_axis(Axis(0)).expect("non-empty");
        y -= &mean;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("t-SNE embedding diverged".into()));
        }
    }
    if params.iterations % KL_EVERY == 0 {
        let q_sum = student_affinities(&y, &mut q_num);
        kl_trace.push((params.iterations, kl_divergence(&p, &q_num, q_sum)));
    }
    Ok(TsneResult { embedding: y, kl_trace })
}

/// Projects profiles using the same standardized distances as clustering.
pub fn tsne_project(profiles: &[OfficeProfile], params: &TsneParams) -> Result<TsneResult> {
    let d = profile_distances(profiles)?;
    tsne(&d.mapv(|v| v * v), params)
}

pub fn write_tsne_csv(path: &Path, office_ids: &[String], embedding: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if office_ids.len() != embedding.nrows() || labels.len() != embedding.nrows() || embedding.ncols() < 2 {
        return Err(Error::Dimension("t-SNE output rows".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Invalid(e.to_string()))?;
    let io = |e: csv::Error| Error::Invalid(e.to_string());
    w.write_record(["office_id", "x", "y", "cluster_id"]).map_err(io)?;
    for (i, id) in office_ids.iter().enumerate() {
        w.write_record([
            id.clone(),
            embedding[[i, 0]].to_string(),
            embedding[[i, 1]].to_string(),
            labels[i].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Three well-separated 4-D blobs.
    fn blobs(per: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = util::stream_rng(seed, 3);
        let n = per * 3;
        let mut x: Array2<f64> = Array2::zeros((n, 4));
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i / per;
            labels.push(c);
            for k in 0..4 {
                x[[i, k]] = if k == c { 10.0 } else { 0.0 } + rng.gen_range(-0.5..0.5);
            }
        }
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                d[[i, j]] = (0..4).map(|k| (x[[i, k]] - x[[j, k]]).powi(2)).sum::<f64>();
            }
        }
        (d, labels)
    }

    fn perplexity_of_row(p: &[f64]) -> f64 {
        let s: f64 = p.iter().sum();
        let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -(v / s) * (v / s).ln()).sum();
        h.exp()
    }

    #[test]
    fn affinities_are_normalized_and_calibrated() {
        let (d, _) = blobs(6, 1);
        let p = joint_probabilities(&d, 4.0).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_eq!(p, p.t());
        let cond = conditional_probabilities(&d, 4.0);
        for row in cond.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!((perplexity_of_row(row.as_slice().unwrap()) - 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_determinism_and_separation() {
        let (d, labels) = blobs(6, 2);
        let params = TsneParams { perplexity: 4.0, ..Default::default() };
        let a = tsne(&d, &params).unwrap();
        assert_eq!(a.embedding.dim(), (18, 2));
        assert_eq!(a, tsne(&d, &params).unwrap());
        for seed in [0, 1] {
            let r = tsne(&d, &TsneParams { seed, ..params.clone() }).unwrap();
            let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
            for i in 0..18 {
                for j in i + 1..18 {
                    let dist = ((r.embedding[[i, 0]] - r.embedding[[j, 0]]).powi(2)
                        + (r.embedding[[i, 1]] - r.embedding[[j, 1]]).powi(2))
                    .sqrt();
                    if labels[i] == labels[j] {
                        intra += dist;
                        ni += 1;
                    } else {
                        inter += dist;
                        ne += 1;
                    }
                }
            }
            assert!(intra / (ni as f64) < inter / (ne as f64));
        }
    }

    #[test]
    fn kl_non_increasing_after_exaggeration() {
        for seed in 0..6 {
        let (d, _) = blobs(17, seed);
        let r = tsne(&d, &TsneParams { seed, ..Default::default() }).unwrap();
        let late: Vec<f64> = r.kl_trace.iter().filter(|(it, _)| *it >= 100).map(|&(_, kl)| kl).collect();
        assert!(late.len() > 5);
        for w in late.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", r.kl_trace);
        }
        }
    }

    #[test]
    fn infeasible_perplexity() {
        let (d, _) = blobs(2, 4);
        assert!(tsne(&d, &TsneParams { perplexity: 4.0, ..Default::default() }).is_err());
        assert!(tsne(&d, &TsneParams { perplexity: 1.5, ..Default::default() }).is_ok());
    }
}
