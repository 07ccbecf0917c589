use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::PointSet;
use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a component counts as absent.
const RANK_TOL: f64 = 1e-10;

/// Principal-component projection onto the top `target_dim` components.
///
/// Inputs already at or below `target_dim` are returned unchanged (no
/// centring). Components are sorted by decreasing variance and each is
/// signed so its largest-magnitude loading is positive.
pub fn reduce_dimensions(points: &PointSet, target_dim: usize) -> Result<PointSet> {
    let n = points.len();
    let d = points.dim();
    if target_dim == 0 {
        return Err(Error::InvalidInput("target dimension must be positive".into()));
    }
    if d <= target_dim {
        return Ok(points.clone());
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("PCA needs at least 2 points, got {n}")));
    }

    let mut x = DMatrix::<f64>::from_row_iterator(n, d, points.rows().flatten().copied());
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }

    let components = if d <= n { via_covariance(&x) } else { via_gram(&x) };
    let rank = components.len().min(target_dim);
    if rank < target_dim {
        tracing::warn!(rank, target_dim, "rank-deficient input; padding reduced coordinates with zeros");
    }

    let mut data = vec![0.0; n * target_dim];
    for (k, v) in components.iter().take(rank).enumerate() {
        let proj = &x * v;
        for i in 0..n {
            data[i * target_dim + k] = proj[i];
        }
    }
    Ok(PointSet::from_flat(points.ids.clone(), target_dim, data, points.original_dim))
}

/// Unit principal axes with non-negligible variance, by decreasing variance.
fn via_covariance(x: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let cov = x.transpose() * x;
    let eig = SymmetricEigen::new(cov);
    ranked(&eig.eigenvalues)
        .into_iter()
        .map(|k| orient(eig.eigenvectors.column(k).into_owned()))
        .collect()
}

/// Same axes from the n×n Gram matrix, cheaper when d > n.
fn via_gram(x: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let gram = x * x.transpose();
    let eig = SymmetricEigen::new(gram);
    ranked(&eig.eigenvalues)
        .into_iter()
        .map(|k| {
            let v = x.transpose() * eig.eigenvectors.column(k);
            orient(v.normalize())
        })
        .collect()
}

fn ranked(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let top = values.iter().copied().fold(0.0f64, f64::max);
    order.retain(|&k| top > 0.0 && values[k] > top * RANK_TOL);
    order
}

fn orient(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
    v
}
