//! HDBSCAN with excess-of-mass cluster selection.
//!
//! Core distance counts the point itself among its `min_cluster_size`
//! nearest neighbours. The root of the condensed tree is never selected.

use rayon::prelude::*;

use super::{euclidean, ClusterAssignment, PointSet, NOISE};
use crate::error::{Error, Result};

/// Smallest merge distance used when converting to λ = 1/d.
const MIN_DISTANCE: f64 = 1e-12;

/// Density-based clustering. Cluster ids are dense, ordered by decreasing
/// size; points outside every selected cluster are labelled noise.
pub fn cluster_density(points: &PointSet, min_cluster_size: usize) -> Result<ClusterAssignment> {
    if min_cluster_size < 2 {
        return Err(Error::InvalidInput(format!(
            "min_cluster_size must be at least 2, got {min_cluster_size}"
        )));
    }
    let n = points.len();
    if n < min_cluster_size {
        tracing::warn!(n, min_cluster_size, "fewer points than min_cluster_size; all noise");
        return Ok(ClusterAssignment::all_noise(n));
    }
    let core = core_distances(points, min_cluster_size);
    let mut mst = prim_mst(points, &core);
    mst.sort_by(|a, b| a.2.total_cmp(&b.2));
    let hierarchy = single_linkage(n, &mst);
    let tree = condense(n, &hierarchy, min_cluster_size);
    let raw = select_and_label(n, &tree);
    Ok(ClusterAssignment::from_core_labels(points, renumber_by_size(raw)))
}

fn core_distances(points: &PointSet, k: usize) -> Vec<f64> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let p = points.row(i);
            let mut d: Vec<f64> = points.rows().map(|q| euclidean(p, q)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Prim's algorithm on the dense mutual-reachability graph.
fn prim_mst(points: &PointSet, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut source = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    for _ in 1..n {
        in_tree[current] = true;
        let p = points.row(current);
        let cc = core[current];
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let mr = euclidean(p, points.row(j)).max(cc).max(core[j]);
            if mr < best[j] {
                best[j] = mr;
                source[j] = current;
            }
            if best[j] < next_d || next == usize::MAX {
                next_d = best[j];
                next = j;
            }
        }
        edges.push((source[next], next, next_d));
        current = next;
    }
    edges
}

#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Single-linkage dendrogram from sorted MST edges; node `n + i` is merge `i`.
fn single_linkage(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Merge> {
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut size = vec![1usize; 2 * n - 1];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut out = Vec::with_capacity(n - 1);
    for (i, &(a, b, d)) in edges.iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + i;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        out.push(Merge {
            left: ra,
            right: rb,
            distance: d,
            size: size[node],
        });
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Row {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

fn leaves(n: usize, hierarchy: &[Merge], node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let m = hierarchy[x - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
}

/// Condensed tree. Cluster labels start at `n` (the root).
fn condense(n: usize, hierarchy: &[Merge], min_size: usize) -> Vec<Row> {
    let root = 2 * n - 2;
    let mut relabel = vec![0usize; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut rows = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    let count = |x: usize| if x < n { 1 } else { hierarchy[x - n].size };
    let mut fallen = Vec::new();

    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = hierarchy[node - n];
        let lambda = 1.0 / m.distance.max(MIN_DISTANCE);
        let (lc, rc) = (count(m.left), count(m.right));
        let label = relabel[node];
        match (lc >= min_size, rc >= min_size) {
            (true, true) => {
                for (child, c) in [(m.left, lc), (m.right, rc)] {
                    relabel[child] = next_label;
                    rows.push(Row { parent: label, child: next_label, lambda, size: c });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (keep_left, keep_right) => {
                for (child, keep) in [(m.left, keep_left), (m.right, keep_right)] {
                    if keep {
                        relabel[child] = label;
                        queue.push_back(child);
                    } else {
                        fallen.clear();
                        leaves(n, hierarchy, child, &mut fallen);
                        rows.extend(fallen.iter().map(|&p| Row { parent: label, child: p, lambda, size: 1 }));
                    }
                }
            }
        }
    }
    rows
}

/// Excess-of-mass selection followed by point labelling. Labels are the
/// condensed-tree cluster ids of the selected clusters, or `NOISE`.
fn select_and_label(n: usize, tree: &[Row]) -> Vec<i64> {
    let max_cluster = tree.iter().map(|r| r.parent).chain(tree.iter().filter(|r| r.child >= n).map(|r| r.child)).max().unwrap_or(n);
    let k = max_cluster - n + 1;

    let mut birth = vec![0.0; k];
    let mut parent_of = vec![usize::MAX; k];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
    for r in tree.iter().filter(|r| r.child >= n) {
        birth[r.child - n] = r.lambda;
        parent_of[r.child - n] = r.parent - n;
        children[r.parent - n].push(r.child - n);
    }
    let mut stability = vec![0.0; k];
    for r in tree {
        stability[r.parent - n] += (r.lambda - birth[r.parent - n]) * r.size as f64;
    }

    if k == 1 {
        // No split survived condensation. When every point left the root at
        // the same density the data has no internal structure: one cluster.
        let first = tree.first().map(|r| r.lambda);
        if first.is_some() && tree.iter().all(|r| Some(r.lambda) == first) {
            tracing::warn!("degenerate density profile; returning a single cluster");
            return vec![n as i64; n];
        }
        return vec![NOISE as i64; n];
    }

    let mut selected = vec![false; k];
    // Children always carry larger ids than their parent, so descending id
    // order visits every child before its parent.
    for c in (1..k).rev() {
        let subtree: f64 = children[c].iter().map(|&ch| stability[ch]).sum();
        if subtree > stability[c] {
            stability[c] = subtree;
        } else {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(x) = stack.pop() {
                selected[x] = false;
                stack.extend_from_slice(&children[x]);
            }
        }
    }

    let mut point_parent = vec![0usize; n];
    for r in tree.iter().filter(|r| r.child < n) {
        point_parent[r.child] = r.parent - n;
    }
    point_parent
        .into_iter()
        .map(|mut c| {
            loop {
                if selected[c] {
                    return (c + n) as i64;
                }
                if c == 0 {
                    return NOISE as i64;
                }
                c = parent_of[c];
            }
        })
        .collect()
}

/// Dense ids by decreasing size; ties by smallest member index.
fn renumber_by_size(raw: Vec<i64>) -> Vec<i32> {
    let mut stats: std::collections::BTreeMap<i64, (usize, usize)> = Default::default();
    for (i, &l) in raw.iter().enumerate() {
        if l >= 0 {
            let e = stats.entry(l).or_insert((0, i));
            e.0 += 1;
        }
    }
    let mut order: Vec<(i64, (usize, usize))> = stats.into_iter().collect();
    order.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let map: std::collections::HashMap<i64, i32> =
        order.iter().enumerate().map(|(new, (old, _))| (*old, new as i32)).collect();
    raw.iter().map(|l| if *l >= 0 { map[l] } else { NOISE }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Membership;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ps(rows: Vec<Vec<f64>>) -> PointSet {
        let ids = (0..rows.len()).map(|i| format!("p{i}")).collect();
        PointSet::new(ids, &rows).unwrap()
    }

    fn blobs(centers: &[[f64; 2]], per: usize, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        centers
            .iter()
            .flat_map(|c| {
                (0..per)
                    .map(|_| vec![c[0] + normal.sample(&mut rng), c[1] + normal.sample(&mut rng)])
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn too_few_points_are_noise() {
        let p = ps((0..4).map(|i| vec![i as f64, 0.0]).collect());
        let a = cluster_density(&p, 5).unwrap();
        assert_eq!(a.noise_count(), 4);
        assert_eq!(a.n_clusters(), 0);
    }

    #[test]
    fn min_size_below_two_is_rejected() {
        assert!(cluster_density(&ps(vec![vec![0.0]]), 1).is_err());
    }

    #[test]
    fn separated_blobs_split_cleanly() {
        let p = ps(blobs(&[[0.0, 0.0], [10.0, 0.0]], 100, 0.1, 11));
        let a = cluster_density(&p, 5).unwrap();
        assert_eq!(a.n_clusters(), 2);
        assert!(a.noise_count() <= 4);
        let first = a.labels[0];
        assert!(a.labels[..100].iter().all(|&l| l == first || l == NOISE));
        assert!(a.labels[100..].iter().all(|&l| l != first));
    }

    #[test]
    fn ids_ordered_by_size() {
        let mut rows = blobs(&[[0.0, 0.0]], 30, 0.1, 3);
        rows.extend(blobs(&[[20.0, 0.0]], 80, 0.1, 4));
        let a = cluster_density(&ps(rows), 5).unwrap();
        let m = a.members();
        assert_eq!(m.len(), 2);
        assert!(m[0].len() >= m[1].len());
        assert!(m[0].iter().all(|&i| i >= 30));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let p = ps(vec![vec![1.0, 1.0]; 12]);
        let a = cluster_density(&p, 5).unwrap();
        assert_eq!(a.n_clusters(), 1);
        assert_eq!(a.noise_count(), 0);
    }

    #[test]
    fn every_cluster_meets_min_size() {
        let p = ps(blobs(&[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [8.0, 8.0]], 12, 0.5, 9));
        for mcs in [3, 5, 8] {
            let a = cluster_density(&p, mcs).unwrap();
            for m in a.members() {
                assert!(m.len() >= mcs);
            }
            assert!(a.membership.iter().zip(&a.labels).all(|(m, &l)| (l == NOISE) == (*m == Membership::Noise)));
        }
    }

    #[test]
    fn permutation_keeps_partition() {
        let rows = blobs(&[[0.0, 0.0], [4.0, 0.0], [0.0, 5.0]], 25, 0.4, 21);
        let a = cluster_density(&ps(rows.clone()), 5).unwrap();
        let perm: Vec<usize> = (0..rows.len()).rev().collect();
        let b = cluster_density(&ps(perm.iter().map(|&i| rows[i].clone()).collect()), 5).unwrap();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                let same_a = a.labels[i] != NOISE && a.labels[i] == a.labels[j];
                let (pi, pj) = (rows.len() - 1 - i, rows.len() - 1 - j);
                let same_b = b.labels[pi] != NOISE && b.labels[pi] == b.labels[pj];
                assert_eq!(same_a, same_b);
            }
        }
    }
}
