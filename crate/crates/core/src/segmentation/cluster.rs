use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::index;
use serde::Serialize;

use super::profile::{profile_distances, OfficeProfile};
use crate::error::{Error, Result};
use crate::util;

/// One agglomeration step. Cluster ids below `n` are leaves; step `s`
/// creates cluster `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Ward linkage over a symmetric distance matrix using the Lance-Williams
/// update. The closest pair is merged first; ties go to the lowest index
/// pair.
pub fn ward_linkage(distances: &Array2<f64>) -> Result<Vec<Merge>> {
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(Error::Dimension("distance matrix must be square".into()));
    }
    let mut d = distances.clone();
    let mut active: Vec<bool> = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d[[i, j]] < best.0 {
                    best = (d[[i, j]], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((nk + ni) * d[[k, i]].powi(2) + (nk + nj) * d[[k, j]].powi(2) - nk * dij.powi(2))
                / (nk + ni + nj);
            let v = v.max(0.0).sqrt();
            d[[k, i]] = v;
            d[[i, k]] = v;
        }
        let (a, b) = (id[i].min(id[j]), id[i].max(id[j]));
        merges.push(Merge {
            left: a,
            right: b,
            distance: dij,
            size: size[i] + size[j],
        });
        size[i] += size[j];
        active[j] = false;
        id[i] = n + step;
    }
    Ok(merges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ClusterCriterion {
    /// Stop at exactly `k` clusters.
    Count(usize),
    /// Apply every merge with distance at most the cutoff.
    Distance(f64),
    /// Finest cut whose `top` largest clusters hold at least `fraction` of
    /// the offices.
    TopCoverage { top: usize, fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    pub office_ids: Vec<String>,
    /// Cluster id per office, numbered from 0 by first appearance.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    pub criterion: ClusterCriterion,
    /// Largest merge distance applied.
    pub cutoff: f64,
    pub merges: Vec<Merge>,
}

impl ClusterAssignment {
    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn cluster_of(&self, office_id: &str) -> Option<usize> {
        self.office_ids.iter().position(|o| o == office_id).map(|i| self.labels[i])
    }

    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.office_ids
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == cluster)
            .map(|(o, _)| o.as_str())
            .collect()
    }

    pub fn as_map(&self) -> BTreeMap<String, usize> {
        self.office_ids.iter().cloned().zip(self.labels.iter().copied()).collect()
    }

    /// Cluster ids sorted by size descending, then id ascending.
    pub fn ranked(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.sizes.len()).collect();
        ids.sort_by(|&a, &b| self.sizes[b].cmp(&self.sizes[a]).then(a.cmp(&b)));
        ids
    }

    /// Fraction of offices held by the `top` largest clusters.
    pub fn top_coverage(&self, top: usize) -> f64 {
        let covered: usize = self.ranked().iter().take(top).map(|&c| self.sizes[c]).sum();
        covered as f64 / self.labels.len() as f64
    }
}

/// Labels after applying the first `steps` merges.
fn cut(n: usize, merges: &[Merge], steps: usize) -> (Vec<usize>, Vec<usize>) {
    let mut parent: Vec<usize> = (0..n + steps).collect();
    for (s, m) in merges[..steps].iter().enumerate() {
        parent[m.left] = n + s;
        parent[m.right] = n + s;
    }
    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let mut numbering = BTreeMap::new();
    let mut labels = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    for leaf in 0..n {
        let r = root(leaf);
        let next = numbering.len();
        let label = *numbering.entry(r).or_insert(next);
        if label == sizes.len() {
            sizes.push(0);
        }
        sizes[label] += 1;
        labels.push(label);
    }
    (labels, sizes)
}

/// Deterministic Ward clustering of office profiles on z-scored features.
pub fn cluster_offices(profiles: &[OfficeProfile], criterion: ClusterCriterion) -> Result<ClusterAssignment> {
    let n = profiles.len();
    if n < 2 {
        return Err(Error::Invalid("clustering needs at least two profiles".into()));
    }
    let merges = ward_linkage(&profile_distances(profiles)?)?;
    let steps = match criterion {
        ClusterCriterion::Count(k) => {
            if k == 0 || k > n {
                return Err(Error::Invalid(format!("cannot form {k} clusters from {n} profiles")));
            }
            n - k
        }
        ClusterCriterion::Distance(h) => merges.iter().take_while(|m| m.distance <= h).count(),
        ClusterCriterion::TopCoverage { top, fraction } => {
            if top == 0 || top > n {
                return Err(Error::Invalid(format!("cannot rank {top} clusters from {n} profiles")));
            }
            (0..=n - top)
                .find(|&s| {
                    let (_, sizes) = cut(n, &merges, s);
                    let mut sizes = sizes;
                    sizes.sort_unstable_by(|a, b| b.cmp(a));
                    sizes.iter().take(top).sum::<usize>() as f64 >= fraction * n as f64
                })
                .unwrap_or(n - top)
        }
    };
    let (labels, sizes) = cut(n, &merges, steps);
    Ok(ClusterAssignment {
        office_ids: profiles.iter().map(|p| p.office_id.clone()).collect(),
        labels,
        sizes,
        criterion,
        cutoff: if steps == 0 { 0.0 } else { merges[steps - 1].distance },
        merges,
    })
}

/// Draws `per_cluster` offices uniformly from each of the `n_clusters`
/// largest clusters.
pub fn select_training_offices(
    assignment: &ClusterAssignment,
    per_cluster: usize,
    n_clusters: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let ranked = assignment.ranked();
    if ranked.len() < n_clusters {
        return Err(Error::Invalid(format!(
            "need {n_clusters} clusters but only {} exist",
            ranked.len()
        )));
    }
    let mut out = Vec::with_capacity(per_cluster * n_clusters);
    for (rank, &c) in ranked.iter().take(n_clusters).enumerate() {
        let members = assignment.members(c);
        if members.len() < per_cluster {
            return Err(Error::Invalid(format!(
                "cluster {c} has {} offices, {per_cluster} requested",
                members.len()
            )));
        }
        let mut rng = util::stream_rng(seed, rank as u64);
        let mut picks = index::sample(&mut rng, members.len(), per_cluster).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| members[i].to_string()));
    }
    Ok(out)
}
