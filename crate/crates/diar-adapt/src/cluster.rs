//! Clustering back-ends: average-linkage agglomerative clustering with
//! silhouette-based speaker-count estimation, and spectral clustering with
//! eigenvalue-threshold count estimation followed by k-means on the spectral
//! embedding.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregate::cosine_affinity;
use crate::embeddings::SessionEmbeddings;
use crate::error::{Error, Result};

/// Default silhouette sweep bounds for speaker-count estimation.
pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_K_MAX: usize = 10;

/// Cluster labels for a session's windows.
///
/// Two labelling regimes share this type: raw clustering output uses labels
/// `0..num_clusters`, while the non-speech regime reserves label 0 for
/// non-speech and uses `1..=num_clusters` for speakers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl ClusterAssignment {
    /// Relabels clusters in first-occurrence order (0, 1, 2, …) so that
    /// partitions compare stably regardless of internal label history.
    pub fn canonicalized(raw: Vec<usize>) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for r in raw {
            let next = map.len();
            let id = match map.iter().find(|(from, _)| *from == r) {
                Some(&(_, to)) => to,
                None => {
                    map.push((r, next));
                    next
                }
            };
            labels.push(id);
        }
        ClusterAssignment {
            labels,
            num_clusters: map.len(),
        }
    }
}

/// Spectral clustering settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub eigen_threshold: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            eigen_threshold: 20.0,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
            seed: 0,
        }
    }
}

/// Pairwise cosine distance (1 − cosine similarity), zero diagonal.
pub fn cosine_distance_matrix(session: &SessionEmbeddings) -> Result<Vec<Vec<f64>>> {
    let mut m = cosine_affinity(session)?;
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { 0.0 } else { 1.0 - *v };
        }
    }
    Ok(m)
}

/// One active cluster during agglomeration.
struct Agglomerator {
    /// Sum of pairwise point distances between clusters (upper triangle by
    /// slot index); `dist = dsum / (size_a * size_b)`.
    dsum: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    active: Vec<bool>,
    labels: Vec<usize>, // point -> slot
    n_active: usize,
}

impl Agglomerator {
    fn new(dist: &[Vec<f64>]) -> Self {
        let l = dist.len();
        Self {
            dsum: dist.to_vec(),
            sizes: vec![1; l],
            active: vec![true; l],
            labels: (0..l).collect(),
            n_active: l,
        }
    }

    /// Finds the active pair with minimal average-linkage distance, scanning
    /// slots in ascending order so exact ties resolve to the first pair.
    fn closest_pair(&self) -> (usize, usize) {
        let l = self.active.len();
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..l {
            if !self.active[i] {
                continue;
            }
            for j in i + 1..l {
                if !self.active[j] {
                    continue;
                }
                let d = self.dsum[i][j] / (self.sizes[i] * self.sizes[j]) as f64;
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        (best.1, best.2)
    }

    fn min_distance(&self) -> f64 {
        let (i, j) = self.closest_pair();
        self.dsum[i][j] / (self.sizes[i] * self.sizes[j]) as f64
    }

    /// Merges slot `j` into slot `i` (`i < j`).
    fn merge(&mut self, i: usize, j: usize) {
        for m in 0..self.active.len() {
            if m == i || m == j || !self.active[m] {
                continue;
            }
            let (a, b) = (self.dsum[m.min(i)][m.max(i)], self.dsum[m.min(j)][m.max(j)]);
            self.dsum[m.min(i)][m.max(i)] = a + b;
        }
        self.sizes[i] += self.sizes[j];
        self.active[j] = false;
        self.n_active -= 1;
        for l in self.labels.iter_mut() {
            if *l == j {
                *l = i;
            }
        }
    }

    fn assignment(&self) -> ClusterAssignment {
        ClusterAssignment::canonicalized(self.labels.clone())
    }
}

/// Average-linkage agglomerative clustering on cosine distance. With `k =
/// None` the cluster count is estimated by the silhouette sweep
/// [`estimate_k_silhouette`] over [2, min(10, L−1)].
pub fn ahc(session: &SessionEmbeddings, k: Option<usize>) -> Result<ClusterAssignment> {
    let l = session.len();
    if l == 0 {
        return Err(Error::invalid("cannot cluster an empty session"));
    }
    let k = match k {
        Some(k) => {
            if k < 1 || k > l {
                return Err(Error::invalid(format!(
                    "cluster count {k} outside [1, {l}]"
                )));
            }
            k
        }
        None => estimate_k_silhouette(session, DEFAULT_K_MIN, DEFAULT_K_MAX.min(l.saturating_sub(1)))?,
    };
    let dist = cosine_distance_matrix(session)?;
    let mut agg = Agglomerator::new(&dist);
    while agg.n_active > k {
        let (i, j) = agg.closest_pair();
        agg.merge(i, j);
    }
    Ok(agg.assignment())
}

/// Average-linkage agglomeration that merges while the closest pair lies at
/// or below `distance_threshold`, leaving the cluster count data-driven.
pub fn ahc_threshold(
    session: &SessionEmbeddings,
    distance_threshold: f64,
) -> Result<ClusterAssignment> {
    if session.is_empty() {
        return Err(Error::invalid("cannot cluster an empty session"));
    }
    let dist = cosine_distance_matrix(session)?;
    let mut agg = Agglomerator::new(&dist);
    while agg.n_active > 1 && agg.min_distance() <= distance_threshold {
        let (i, j) = agg.closest_pair();
        agg.merge(i, j);
    }
    Ok(agg.assignment())
}

/// Mean silhouette coefficient of a labelled partition under a precomputed
/// distance matrix. Singleton clusters score 0; a degenerate 0/0 scores 0.
fn mean_silhouette(dist: &[Vec<f64>], labels: &[usize], num_clusters: usize) -> f64 {
    let l = labels.len();
    let mut sizes = vec![0usize; num_clusters];
    for &c in labels {
        sizes[c] += 1;
    }
    let mut total = 0.0;
    for i in 0..l {
        let own = labels[i];
        if sizes[own] <= 1 {
            continue; // silhouette 0
        }
        let mut sums = vec![0.0; num_clusters];
        for j in 0..l {
            if j != i {
                sums[labels[j]] += dist[i][j];
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..num_clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / l as f64
}

/// Estimates the cluster count by cutting the average-linkage dendrogram at
/// each k in [k_min, k_max] and returning the k with the highest mean
/// silhouette (ties to the smaller k). Degenerate sessions — fewer than 3
/// windows, or all windows identical — return 1.
pub fn estimate_k_silhouette(
    session: &SessionEmbeddings,
    k_min: usize,
    k_max: usize,
) -> Result<usize> {
    let l = session.len();
    if l < 3 {
        return Ok(1);
    }
    let dist = cosine_distance_matrix(session)?;
    // All-identical sessions (up to float rounding) have one cluster; the
    // silhouette is undefined there.
    if dist
        .iter()
        .all(|row| row.iter().all(|&d| d.abs() <= 1e-12))
    {
        return Ok(1);
    }
    if !(2 <= k_min && k_min <= k_max && k_max < l) {
        return Err(Error::invalid(format!(
            "silhouette sweep [{k_min}, {k_max}] invalid for {l} windows"
        )));
    }
    let mut agg = Agglomerator::new(&dist);
    let mut best: Option<(f64, usize)> = None;
    while agg.n_active > k_min {
        let (i, j) = agg.closest_pair();
        agg.merge(i, j);
        if agg.n_active <= k_max {
            let assignment = agg.assignment();
            let s = mean_silhouette(&dist, &assignment.labels, assignment.num_clusters);
            // The sweep runs from k_max down to k_min, so replacing the best
            // on ties settles on the smaller k.
            if best.is_none_or(|(bs, _)| s >= bs) {
                best = Some((s, agg.n_active));
            }
        }
    }
    Ok(best.map_or(1, |(_, k)| k))
}

/// Eigenvalues of the session's cosine affinity matrix, sorted descending.
pub fn affinity_eigenvalues(session: &SessionEmbeddings) -> Result<Vec<f64>> {
    let a = cosine_affinity(session)?;
    let l = a.len();
    let m = DMatrix::from_fn(l, l, |i, j| a[i][j]);
    let eigen = SymmetricEigen::new(m);
    let mut vals: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals)
}

/// Spectral clustering: eigendecompose the raw cosine affinity (no Laplacian
/// or other refinement), pick k (given, or the number of eigenvalues above
/// `eigen_threshold`, clamped to at least 1), and k-means the rows of the
/// top-k eigenvector matrix.
pub fn spectral(
    session: &SessionEmbeddings,
    config: &SpectralConfig,
    k: Option<usize>,
) -> Result<ClusterAssignment> {
    let l = session.len();
    if l < 2 {
        return Err(Error::invalid("spectral clustering needs at least 2 windows"));
    }
    if !config.eigen_threshold.is_finite() || config.eigen_threshold <= 0.0 {
        return Err(Error::invalid("eigen threshold must be positive"));
    }
    let a = cosine_affinity(session)?;
    let m = DMatrix::from_fn(l, l, |i, j| a[i][j]);
    let eigen = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&x, &y| eigen.eigenvalues[y].total_cmp(&eigen.eigenvalues[x]));

    let k = match k {
        Some(k) => {
            if k < 1 || k > l {
                return Err(Error::invalid(format!(
                    "cluster count {k} outside [1, {l}]"
                )));
            }
            k
        }
        None => {
            let above = order
                .iter()
                .filter(|&&i| eigen.eigenvalues[i] > config.eigen_threshold)
                .count();
            if above == 0 {
                log::warn!(
                    "no affinity eigenvalue above {}; clamping cluster count to 1",
                    config.eigen_threshold
                );
            }
            above.clamp(1, l)
        }
    };

    let rows: Vec<Vec<f64>> = (0..l)
        .map(|i| order[..k].iter().map(|&c| eigen.eigenvectors[(i, c)]).collect())
        .collect();
    let labels = kmeans(
        &rows,
        k,
        config.seed,
        config.kmeans_restarts,
        config.kmeans_max_iter,
    )?;
    Ok(ClusterAssignment::canonicalized(labels))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by squared distance, ties to the smaller index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Sum of squared distances of each point to its cluster mean.
fn kmeans_objective(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut means = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(labels) {
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(p) {
            *m += v;
        }
    }
    for (mean, &count) in means.iter_mut().zip(&counts) {
        if count > 0 {
            for m in mean.iter_mut() {
                *m /= count as f64;
            }
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &c)| sq_dist(p, &means[c]))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding, re-running `restarts` times with
/// seeds derived from the master seed and keeping the restart with the lowest
/// objective. Deterministic throughout; an empty cluster is re-seeded at the
/// point farthest from its assigned centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("k-means needs at least one point"));
    }
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    if restarts < 1 || max_iter < 1 {
        return Err(Error::invalid("restarts and max_iter must be at least 1"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let restart_seeds: Vec<u64> = (0..restarts).map(|_| master.random()).collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    for rs in restart_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(rs);
        let labels = lloyd(points, k, max_iter, &mut rng);
        let objective = kmeans_objective(points, &labels, k);
        match &best {
            Some((b, _)) if *b <= objective => {}
            _ => best = Some((objective, labels)),
        }
    }
    let labels = best.expect("at least one restart").1;
    Ok(ClusterAssignment::canonicalized(labels).labels)
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random_range(0.0..total);
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if r < cum {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
    }

    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    fix_empty_clusters(points, &centroids, &mut labels, k);
    for _ in 0..max_iter {
        // Update step: means of current clusters.
        let dim = points[0].len();
        let mut counts = vec![0usize; k];
        let mut means = vec![vec![0.0; dim]; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(p) {
                *m += v;
            }
        }
        for (c, mean) in means.iter_mut().enumerate() {
            if counts[c] > 0 {
                for m in mean.iter_mut() {
                    *m /= counts[c] as f64;
                }
            } else {
                mean.clone_from(&centroids[c]);
            }
        }
        centroids = means;

        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        fix_empty_clusters(points, &centroids, &mut next, k);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// Re-seeds each empty cluster at the point farthest from its assigned
/// centroid, never stealing a cluster's sole member.
fn fix_empty_clusters(
    points: &[Vec<f64>],
    centroids: &[Vec<f64>],
    labels: &mut [usize],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &c in labels.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut worst: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if worst.is_none_or(|(wd, _)| d > wd) {
                worst = Some((d, i));
            }
        }
        let (_, steal) = worst.expect("a cluster with at least two members exists");
        labels[steal] = empty;
    }
}
