//! Agglomerative hierarchical clustering over cosine distances, dendrogram
//! cuts by threshold or cluster count, and silhouette-based estimation of the
//! number of speakers.

use thiserror::Error;

use crate::geometry::DistanceMatrix;

/// Two candidate counts whose silhouette scores differ by less than this are
/// treated as tied, and the tie resolves toward the smaller count.
pub const SCORE_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cluster count {k} out of range [1, {n}]")]
    CountOutOfRange { k: usize, n: usize },
    #[error("empty candidate range [{k_min}, {k_max}]")]
    EmptyRange { k_min: usize, k_max: usize },
    #[error("silhouette requires at least 2 clusters, got {k}")]
    TooFewClusters { k: usize },
    #[error("labeling covers {labels} points but matrix has {n}")]
    SizeMismatch { labels: usize, n: usize },
}

/// A dense assignment of points to clusters 0..k, every cluster non-empty,
/// cluster indices ordered by first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    assignments: Vec<usize>,
    k: usize,
}

impl ClusterLabeling {
    /// Densify arbitrary cluster ids into 0..k in order of first appearance.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut remap: Vec<Option<usize>> = Vec::new();
        let mut assignments = Vec::with_capacity(raw.len());
        let mut next = 0usize;
        let max_id = raw.iter().copied().max().unwrap_or(0);
        remap.resize(max_id + 1, None);
        for &id in raw {
            let dense = *remap[id].get_or_insert_with(|| {
                let d = next;
                next += 1;
                d
            });
            assignments.push(dense);
        }
        Self { assignments, k: next }
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// One agglomeration step. Node ids follow the usual stepwise convention:
/// leaves are 0..n, the cluster created by merge step s gets id n + s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
}

/// A full average-linkage merge tree. Merge distances are non-decreasing, so
/// any threshold cut corresponds to a prefix of the merge list.
#[derive(Debug, Clone)]
pub struct Dendrogram {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }
}

/// Build the full average-linkage dendrogram.
///
/// Cluster pair distances are maintained with the Lance-Williams update.
/// Tie-breaking is deterministic: each active cluster is represented by the
/// lowest original index among its members, and among equally distant pairs
/// the lexicographically smallest representative pair merges first.
pub fn ahc_build(dist: &DistanceMatrix) -> Dendrogram {
    let n = dist.len();
    let mut work = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            work[i * n + j] = dist.get(i, j);
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut sizes: Vec<f64> = vec![1.0; n];
    let mut node_id: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        // Strict < keeps the first (lexicographically smallest) minimum pair.
        let mut best = f64::INFINITY;
        let mut pair = (0usize, 0usize);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = work[i * n + j];
                if d < best {
                    best = d;
                    pair = (i, j);
                }
            }
        }
        let (i, j) = pair;
        merges.push(Merge { left: node_id[i], right: node_id[j], distance: best });

        let (si, sj) = (sizes[i], sizes[j]);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let d = (si * work[k * n + i] + sj * work[k * n + j]) / (si + sj);
            work[i * n + k] = d;
            work[k * n + i] = d;
        }
        sizes[i] = si + sj;
        active[j] = false;
        node_id[i] = n + step;
    }

    debug_assert!(
        merges.windows(2).all(|w| w[1].distance >= w[0].distance - 1e-9),
        "average linkage produced an inversion"
    );
    Dendrogram { n_leaves: n, merges }
}

/// Apply a prefix of merges and densify the resulting components.
fn labeling_from_merge_prefix(d: &Dendrogram, applied: usize) -> ClusterLabeling {
    let n = d.n_leaves;
    // rep_leaf maps every node id to one leaf underneath it.
    let mut rep_leaf: Vec<usize> = (0..n).collect();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for m in &d.merges {
        rep_leaf.push(rep_leaf[m.left]);
    }
    for m in d.merges.iter().take(applied) {
        let a = find(&mut parent, rep_leaf[m.left]);
        let b = find(&mut parent, rep_leaf[m.right]);
        parent[b] = a;
    }
    let raw: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    ClusterLabeling::from_raw(&raw)
}

/// Clusters formed by all merges with linkage distance strictly below `t`.
pub fn cut_threshold(d: &Dendrogram, t: f64) -> ClusterLabeling {
    let applied = d.merges.iter().take_while(|m| m.distance < t).count();
    labeling_from_merge_prefix(d, applied)
}

/// Exactly `k` clusters, obtained by undoing the last k-1 merges.
pub fn cut_count(d: &Dendrogram, k: usize) -> Result<ClusterLabeling, ClusterError> {
    let n = d.n_leaves;
    if k < 1 || k > n {
        return Err(ClusterError::CountOutOfRange { k, n });
    }
    Ok(labeling_from_merge_prefix(d, n - k))
}

/// Mean silhouette coefficient over all points.
///
/// Per point: s = (b - a) / max(a, b) with a the mean intra-cluster distance
/// (excluding self) and b the smallest mean distance to another cluster.
/// Points in singleton clusters score 0, as do points with a = b = 0.
pub fn silhouette(dist: &DistanceMatrix, labeling: &ClusterLabeling) -> Result<f64, ClusterError> {
    let n = dist.len();
    if labeling.len() != n {
        return Err(ClusterError::SizeMismatch { labels: labeling.len(), n });
    }
    let k = labeling.k();
    if k < 2 || n < 2 {
        return Err(ClusterError::TooFewClusters { k });
    }
    let sizes = labeling.cluster_sizes();
    let assignments = labeling.assignments();
    let mut total = 0.0;
    let mut sums = vec![0.0f64; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            sums[assignments[j]] += dist.get(i, j);
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            continue; // singleton scores 0
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != own {
                b = b.min(sums[c] / sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Cut at `k` and score it. A single cluster has no silhouette; its score is
/// 0 by convention ("no evidence of structure"), so k = 1 wins exactly when
/// every multi-cluster partition scores negative.
pub fn score_candidate(
    dist: &DistanceMatrix,
    d: &Dendrogram,
    k: usize,
) -> Result<(f64, ClusterLabeling), ClusterError> {
    let labeling = cut_count(d, k)?;
    if k == 1 {
        return Ok((0.0, labeling));
    }
    let score = silhouette(dist, &labeling)?;
    Ok((score, labeling))
}

/// Pick the cluster count with the highest silhouette score over
/// [k_min, k_max]. Ties resolve toward the smallest count.
pub fn estimate_count(
    dist: &DistanceMatrix,
    d: &Dendrogram,
    k_min: usize,
    k_max: usize,
) -> Result<(usize, ClusterLabeling), ClusterError> {
    let n = d.n_leaves;
    if k_min < 1 || k_min > k_max {
        return Err(ClusterError::EmptyRange { k_min, k_max });
    }
    if k_max > n {
        return Err(ClusterError::CountOutOfRange { k: k_max, n });
    }
    let mut best: Option<(f64, usize, ClusterLabeling)> = None;
    for k in k_min..=k_max {
        let (score, labeling) = score_candidate(dist, d, k)?;
        match &best {
            Some((best_score, _, _)) if score <= best_score + SCORE_TIE_EPS => {}
            _ => best = Some((score, k, labeling)),
        }
    }
    let (_, k, labeling) = best.expect("non-empty range");
    Ok((k, labeling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pairwise_distances, DistanceMatrix};
    use crate::types::EmbeddingVector;
    use proptest::prelude::*;

    fn matrix(n: usize, entries: &[f64]) -> DistanceMatrix {
        DistanceMatrix::new(n, entries.to_vec()).unwrap()
    }

    /// Planar unit vectors at the given angles (radians).
    fn ring(angles: &[f64]) -> Vec<EmbeddingVector> {
        angles
            .iter()
            .map(|a| EmbeddingVector::new(vec![a.cos(), a.sin()]).unwrap())
            .collect()
    }

    #[test]
    fn ahc_single_point_has_no_merges() {
        let d = ahc_build(&matrix(1, &[0.0]));
        assert!(d.merges().is_empty());
        assert_eq!(d.n_leaves(), 1);
    }

    #[test]
    fn ahc_two_points_single_merge() {
        let d = ahc_build(&matrix(2, &[0.0, 0.75, 0.75, 0.0]));
        assert_eq!(d.merges(), &[Merge { left: 0, right: 1, distance: 0.75 }]);
    }

    #[test]
    fn ahc_tie_break_is_lexicographic() {
        // All pairs equidistant: merge order must be (0,1), then (0..1, 2).
        let e = 0.5;
        let d = ahc_build(&matrix(3, &[0.0, e, e, e, 0.0, e, e, e, 0.0]));
        assert_eq!(d.merges()[0].left, 0);
        assert_eq!(d.merges()[0].right, 1);
        assert_eq!(d.merges()[1].left, 3);
        assert_eq!(d.merges()[1].right, 2);
    }

    #[test]
    fn cut_threshold_zero_gives_singletons() {
        let embs = ring(&[0.0, 0.1, 1.5, 1.6]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        let l = cut_threshold(&dend, 0.0);
        assert_eq!(l.k(), 4);
    }

    #[test]
    fn cut_threshold_above_max_gives_one_cluster() {
        let embs = ring(&[0.0, 0.1, 1.5, 1.6]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        let l = cut_threshold(&dend, 2.1);
        assert_eq!(l.k(), 1);
    }

    #[test]
    fn cut_threshold_separates_two_tight_groups() {
        // Two tight groups far apart; threshold sits between the scales.
        let embs = ring(&[0.0, 0.05, 0.1, 2.0, 2.05, 2.1]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        let l = cut_threshold(&dend, 0.25);
        assert_eq!(l.k(), 2);
        assert_eq!(l.assignments(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn cut_count_extremes() {
        let embs = ring(&[0.0, 0.4, 1.1]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        assert_eq!(cut_count(&dend, 3).unwrap().k(), 3);
        assert_eq!(cut_count(&dend, 1).unwrap().k(), 1);
        assert!(cut_count(&dend, 4).is_err());
        assert!(cut_count(&dend, 0).is_err());
    }

    #[test]
    fn cut_count_two_on_line_pairs_closest_points() {
        // Exhaustive 3-point check: 0 and 1 are closest, 2 is far.
        let embs = ring(&[0.0, 0.2, 1.4]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        let l = cut_count(&dend, 2).unwrap();
        assert_eq!(l.assignments()[0], l.assignments()[1]);
        assert_ne!(l.assignments()[0], l.assignments()[2]);
    }

    #[test]
    fn silhouette_two_tight_pairs_scores_high() {
        let embs = ring(&[0.0, 0.01, 1.8, 1.81]);
        let dm = pairwise_distances(&embs).unwrap();
        let l = ClusterLabeling::from_raw(&[0, 0, 1, 1]);
        let s = silhouette(&dm, &l).unwrap();
        assert!(s > 0.9, "score {s}");
    }

    #[test]
    fn silhouette_identical_points_any_split_is_zero() {
        let dm = matrix(4, &[0.0; 16]);
        let l = ClusterLabeling::from_raw(&[0, 1, 0, 1]);
        assert_eq!(silhouette(&dm, &l).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_rejects_single_cluster() {
        let dm = matrix(2, &[0.0, 1.0, 1.0, 0.0]);
        let l = ClusterLabeling::from_raw(&[0, 0]);
        assert_eq!(silhouette(&dm, &l), Err(ClusterError::TooFewClusters { k: 1 }));
    }

    #[test]
    fn score_candidate_conventions() {
        let embs = ring(&[0.0, 0.3, 0.9, 1.4]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        // k = 1: defined as 0.
        assert_eq!(score_candidate(&dm, &dend, 1).unwrap().0, 0.0);
        // k = n with distinct points: every cluster is a singleton, score 0.
        assert_eq!(score_candidate(&dm, &dend, 4).unwrap().0, 0.0);
    }

    #[test]
    fn score_candidate_prefers_true_split() {
        let embs = ring(&[0.0, 0.05, 2.0, 2.05]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        let s2 = score_candidate(&dm, &dend, 2).unwrap().0;
        let s3 = score_candidate(&dm, &dend, 3).unwrap().0;
        assert!(s2 > s3, "s2 {s2} vs s3 {s3}");
    }

    #[test]
    fn estimate_count_recovers_three_groups() {
        let embs = ring(&[0.0, 0.04, 0.08, 1.2, 1.24, 1.28, 2.5, 2.54, 2.58]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        let (k, labeling) = estimate_count(&dm, &dend, 1, 5).unwrap();
        assert_eq!(k, 3);
        assert_eq!(labeling.assignments(), &[0, 0, 0, 1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn estimate_count_identical_points_ties_to_smallest() {
        let dm = matrix(3, &[0.0; 9]);
        let dend = ahc_build(&dm);
        let (k, _) = estimate_count(&dm, &dend, 1, 3).unwrap();
        assert_eq!(k, 1);
    }

    #[test]
    fn estimate_count_singleton_range() {
        let embs = ring(&[0.0, 0.01, 0.02]);
        let dm = pairwise_distances(&embs).unwrap();
        let dend = ahc_build(&dm);
        let (k, _) = estimate_count(&dm, &dend, 2, 2).unwrap();
        assert_eq!(k, 2);
    }

    #[test]
    fn estimate_count_rejects_empty_range() {
        let dm = matrix(2, &[0.0, 1.0, 1.0, 0.0]);
        let dend = ahc_build(&dm);
        assert!(estimate_count(&dm, &dend, 2, 1).is_err());
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = DistanceMatrix> {
        proptest::collection::vec(0.0f64..2.0, n * (n - 1) / 2).prop_map(move |upper| {
            let mut entries = vec![0.0; n * n];
            let mut it = upper.into_iter();
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = it.next().unwrap();
                    entries[i * n + j] = d;
                    entries[j * n + i] = d;
                }
            }
            DistanceMatrix::new(n, entries).unwrap()
        })
    }

    proptest! {
        #[test]
        fn merge_distances_non_decreasing(dm in (2usize..8).prop_flat_map(arb_matrix)) {
            let dend = ahc_build(&dm);
            for w in dend.merges().windows(2) {
                prop_assert!(w[1].distance >= w[0].distance - 1e-9);
            }
        }

        #[test]
        fn cut_count_yields_k_nonempty_clusters(
            dm in (2usize..8).prop_flat_map(arb_matrix),
            k_seed in 0usize..100,
        ) {
            let dend = ahc_build(&dm);
            let n = dend.n_leaves();
            let k = 1 + k_seed % n;
            let l = cut_count(&dend, k).unwrap();
            prop_assert_eq!(l.k(), k);
            prop_assert!(l.cluster_sizes().iter().all(|&s| s > 0));
        }

        #[test]
        fn silhouette_stays_in_range(dm in (3usize..8).prop_flat_map(arb_matrix)) {
            let dend = ahc_build(&dm);
            for k in 2..=dend.n_leaves() {
                let l = cut_count(&dend, k).unwrap();
                let s = silhouette(&dm, &l).unwrap();
                prop_assert!((-1.0..=1.0).contains(&s), "k={} s={}", k, s);
            }
        }
    }
}
