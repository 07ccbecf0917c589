use crate::clustering::{euclidean, ClusterAssignment, PointSet, NOISE};
use crate::error::{Error, Result};

/// Mean silhouette of the non-noise points, or `None` with fewer than two
/// clusters. Points in singleton clusters score 0.
pub fn silhouette_level(points: &PointSet, a: &ClusterAssignment) -> Option<f64> {
    let members = a.members();
    let k = members.iter().filter(|m| !m.is_empty()).count();
    if k < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &label) in a.labels.iter().enumerate() {
        if label == NOISE {
            continue;
        }
        count += 1;
        let own = &members[label as usize];
        if own.len() == 1 {
            continue;
        }
        let p = points.row(i);
        let mean_to = |m: &[usize]| m.iter().map(|&j| euclidean(p, points.row(j))).sum::<f64>();
        let intra = mean_to(own) / (own.len() - 1) as f64;
        let inter = members
            .iter()
            .enumerate()
            .filter(|(c, m)| *c != label as usize && !m.is_empty())
            .map(|(_, m)| mean_to(m) / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = intra.max(inter);
        if denom > 0.0 {
            total += (inter - intra) / denom;
        }
    }
    Some(total / count as f64)
}

/// Mean of per-level silhouettes over the levels that have at least two
/// clusters.
pub fn silhouette_mean(per_level: &[(PointSet, ClusterAssignment)]) -> Result<f64> {
    let mut scores = Vec::new();
    for (level, (p, a)) in per_level.iter().enumerate() {
        match silhouette_level(p, a) {
            Some(s) => scores.push(s),
            None => tracing::warn!(level, "silhouette skipped: fewer than two clusters"),
        }
    }
    if scores.is_empty() {
        return Err(Error::NoValidLevel);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(rows: &[[f64; 2]], labels: Vec<i32>) -> (PointSet, ClusterAssignment) {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let p = PointSet::new(ids, &rows).unwrap();
        let a = ClusterAssignment::from_core_labels(&p, labels);
        (p, a)
    }

    #[test]
    fn far_tight_blobs_score_high() {
        let (p, a) = level(
            &[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [50.0, 50.0], [50.1, 50.0], [50.0, 50.1]],
            vec![0, 0, 0, 1, 1, 1],
        );
        assert!(silhouette_level(&p, &a).unwrap() > 0.9);
    }

    #[test]
    fn hand_computed_value() {
        // Points 0, 1 | 4: a(0)=1, b(0)=4 -> 0.75; a(1)=1, b(1)=3 -> 2/3;
        // singleton 4 -> 0. Mean = (0.75 + 2/3 + 0) / 3.
        let (p, a) = level(&[[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]], vec![0, 0, 1]);
        let expected = (0.75 + 2.0 / 3.0) / 3.0;
        assert!((silhouette_level(&p, &a).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn singletons_score_zero() {
        let (p, a) = level(&[[0.0, 0.0], [5.0, 0.0]], vec![0, 1]);
        assert_eq!(silhouette_level(&p, &a), Some(0.0));
    }

    #[test]
    fn noise_is_excluded() {
        let (p, a) = level(&[[0.0, 0.0], [1.0, 0.0], [4.0, 0.0], [100.0, 0.0]], vec![0, 0, 1, NOISE]);
        let (q, b) = level(&[[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]], vec![0, 0, 1]);
        assert_eq!(silhouette_level(&p, &a), silhouette_level(&q, &b));
    }

    #[test]
    fn mean_skips_single_cluster_levels() {
        let good = level(&[[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]], vec![0, 0, 1]);
        let single = level(&[[0.0, 0.0], [1.0, 0.0]], vec![0, 0]);
        let s = silhouette_mean(&[good.clone(), single.clone()]).unwrap();
        assert_eq!(s, silhouette_level(&good.0, &good.1).unwrap());
        assert!(matches!(silhouette_mean(&[single]), Err(Error::NoValidLevel)));
    }
}
