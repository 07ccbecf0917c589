//! Dimensionality reduction, density clustering with noise, and soft
//! reassignment of noise points.

mod hdbscan;
mod pca;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hdbscan::cluster_density;
pub use pca::reduce_dimensions;

/// Label of points outside every cluster.
pub const NOISE: i32 = -1;

/// Points in (usually reduced) Euclidean space, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    pub original_dim: usize,
}

impl PointSet {
    pub fn new(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::LengthMismatch(ids.len(), rows.len()));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::LengthMismatch(dim, r.len()));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("non-finite coordinate".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(PointSet {
            ids,
            dim,
            data,
            original_dim: dim,
        })
    }

    pub(crate) fn from_flat(ids: Vec<String>, dim: usize, data: Vec<f64>, original_dim: usize) -> Self {
        debug_assert_eq!(ids.len() * dim, data.len());
        PointSet {
            ids,
            dim,
            data,
            original_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(|i| self.row(i))
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Core,
    Soft,
    Noise,
}

/// Result of clustering: one label per point plus per-cluster centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub membership: Vec<Membership>,
    /// Mean of each cluster's core members, indexed by cluster id.
    pub centroids: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub label: i32,
    pub membership: Membership,
}

impl ClusterAssignment {
    /// All-noise assignment for `n` points.
    pub fn all_noise(n: usize) -> Self {
        ClusterAssignment {
            labels: vec![NOISE; n],
            membership: vec![Membership::Noise; n],
            centroids: Vec::new(),
        }
    }

    /// Builds an assignment from core labels, computing centroids.
    pub(crate) fn from_core_labels(points: &PointSet, labels: Vec<i32>) -> Self {
        let k = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        let mut sums = vec![vec![0.0; points.dim()]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= 0 {
                counts[l as usize] += 1;
                for (s, x) in sums[l as usize].iter_mut().zip(points.row(i)) {
                    *s += x;
                }
            }
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
        let membership = labels
            .iter()
            .map(|&l| if l >= 0 { Membership::Core } else { Membership::Noise })
            .collect();
        ClusterAssignment {
            labels,
            membership,
            centroids: sums,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Point indices of each cluster, indexed by cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    pub fn noise_points(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == NOISE).collect()
    }

    /// `{id → (label, membership)}` artifact.
    pub fn to_artifact(&self, points: &PointSet) -> BTreeMap<String, AssignmentEntry> {
        points
            .ids
            .iter()
            .zip(self.labels.iter().zip(&self.membership))
            .map(|(id, (&label, &membership))| (id.clone(), AssignmentEntry { label, membership }))
            .collect()
    }
}

/// Moves every noise point into the cluster with the nearest centroid.
/// Centroids are left as they were.
pub fn soft_assign(points: &PointSet, a: &ClusterAssignment) -> ClusterAssignment {
    if a.centroids.is_empty() {
        tracing::warn!("soft assignment skipped: no clusters");
        return a.clone();
    }
    let mut out = a.clone();
    for i in a.noise_points() {
        let p = points.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in a.centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        out.labels[i] = best as i32;
        out.membership[i] = Membership::Soft;
    }
    out
}
