//! k-means over token activations, with warm-start centroid caching across
//! steps, plus the Adjusted Rand Index for comparing partitions.
//!
//! Query and key tokens are always clustered independently; sharing one
//! clustering across both sides degrades selection quality. Seeding uses
//! k-means++ driven by [`crate::rng::SplitMix64`], so results replay exactly
//! from `(input, cluster count, seed)`. Distances are squared Euclidean,
//! accumulated in f64.

use alloc::collections::BTreeMap;
use alloc::{vec, vec::Vec};
use rand::Rng;

use crate::error::{param_err, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_COLD_MAX_ITERS: usize = 100;
pub const DEFAULT_WARM_MAX_ITERS: usize = 10;

/// Which tensor a clustering or cache entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TensorRole {
    Query = 0,
    Key = 1,
    Value = 2,
}

/// A hard partition of `n_tokens` points into `n_clusters` clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    n_tokens: usize,
    n_clusters: usize,
    assign: Vec<usize>,
    centroids: Matrix,
    sizes: Vec<usize>,
    inertia: f64,
    iterations: usize,
    converged: bool,
}

impl Clustering {
    /// Assemble a clustering from an explicit assignment and representatives.
    ///
    /// Sizes are derived from the assignment and inertia is computed against
    /// `x`. Every cluster must be non-empty.
    pub fn from_parts(assign: Vec<usize>, centroids: Matrix, x: &Matrix) -> Result<Self> {
        let n_tokens = assign.len();
        let n_clusters = centroids.rows();
        if x.rows() != n_tokens {
            return Err(param_err!(
                "assignment covers {n_tokens} tokens but x has {} rows",
                x.rows()
            ));
        }
        if x.cols() != centroids.cols() {
            return Err(param_err!(
                "x has width {} but centroids have width {}",
                x.cols(),
                centroids.cols()
            ));
        }
        let mut sizes = vec![0usize; n_clusters];
        for &a in &assign {
            if a >= n_clusters {
                return Err(param_err!("cluster id {a} out of range [0, {n_clusters})"));
            }
            sizes[a] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(param_err!("cluster {empty} is empty"));
        }
        let inertia = total_inertia(x, &assign, &centroids);
        Ok(Self {
            n_tokens,
            n_clusters,
            assign,
            centroids,
            sizes,
            inertia,
            iterations: 0,
            converged: true,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assign
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Sum of squared distances from each point to its assigned centroid.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// Lloyd iterations performed.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether the centroid movement fell below tolerance before the
    /// iteration cap.
    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// Centroid initialization.
#[derive(Debug, Clone)]
pub enum KmeansInit {
    /// k-means++ seeding from the configured RNG stream.
    PlusPlus,
    /// Start Lloyd iterations from these centroids (shape `c x d`).
    Warm(Matrix),
}

#[derive(Debug, Clone)]
pub struct KmeansConfig {
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl KmeansConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            max_iters: DEFAULT_COLD_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

fn dist2(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc
}

fn total_inertia(x: &Matrix, assign: &[usize], centroids: &Matrix) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(i, &a)| dist2(x.row(i), centroids.row(a)))
        .sum()
}

/// Draw one index with probability proportional to `weights`. Weights must
/// have a positive total; zero-weight entries are never drawn.
fn weighted_pick(weights: &[f64], total: f64, rng: &mut SplitMix64) -> usize {
    let mut target = rng.next_f64() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        target -= w;
        if target < 0.0 {
            return i;
        }
    }
    // Float roundoff can exhaust the scan; fall back to the last
    // positive-weight entry.
    weights.iter().rposition(|&w| w > 0.0).expect("total > 0")
}

/// Greedy k-means++ seeding: the first center is uniform; each subsequent
/// center draws `2 + floor(ln c)` candidates with probability proportional
/// to squared distance from the nearest chosen center and keeps the
/// candidate that most reduces the total potential. If every remaining point
/// coincides with a chosen center, the lowest-index unchosen point is taken.
fn plus_plus_init(x: &Matrix, c: usize, rng: &mut SplitMix64) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(c, x.cols());
    let mut chosen = vec![false; n];
    let mut d2 = vec![f64::INFINITY; n];
    let candidates = 2 + libm::log(c as f64) as usize;

    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    chosen[first] = true;

    let mut cand_d2 = vec![0.0f64; n];
    let mut best_d2 = vec![0.0f64; n];
    for next in 1..c {
        let prev = centroids.row(next - 1);
        let mut total = 0.0f64;
        for i in 0..n {
            d2[i] = d2[i].min(dist2(x.row(i), prev));
            total += d2[i];
        }
        let pick = if total > 0.0 {
            let mut best: Option<(usize, f64)> = None;
            for _ in 0..candidates {
                let cand = weighted_pick(&d2, total, rng);
                let mut potential = 0.0f64;
                for i in 0..n {
                    cand_d2[i] = d2[i].min(dist2(x.row(i), x.row(cand)));
                    potential += cand_d2[i];
                }
                if best.map_or(true, |(_, p)| potential < p) {
                    best = Some((cand, potential));
                    core::mem::swap(&mut best_d2, &mut cand_d2);
                }
            }
            let (pick, _) = best.expect("at least one candidate");
            d2.copy_from_slice(&best_d2);
            pick
        } else {
            chosen.iter().position(|&c| !c).expect("c <= n")
        };
        centroids.row_mut(next).copy_from_slice(x.row(pick));
        chosen[pick] = true;
        d2[pick] = 0.0;
    }
    centroids
}

/// Lloyd's algorithm with k-means++ or warm initialization.
///
/// Iterates until the largest centroid displacement drops below `tol` or
/// `max_iters` is reached. Empty clusters are repaired by stealing the point
/// farthest from its centroid out of the largest cluster, so every reported
/// cluster size is at least one. Deterministic given `(x, c, config, init)`.
pub fn kmeans(x: &Matrix, c: usize, config: &KmeansConfig, init: KmeansInit) -> Result<Clustering> {
    let n = x.rows();
    if c == 0 {
        return Err(param_err!("cluster count must be positive"));
    }
    if c > n {
        return Err(param_err!("cluster count {c} exceeds {n} tokens"));
    }
    if config.max_iters == 0 {
        return Err(param_err!("max_iters must be positive"));
    }
    let mut centroids = match init {
        KmeansInit::PlusPlus => {
            let mut rng = SplitMix64::new(config.seed);
            plus_plus_init(x, c, &mut rng)
        }
        KmeansInit::Warm(warm) => {
            if warm.rows() != c || warm.cols() != x.cols() {
                return Err(param_err!(
                    "warm centroids are {}x{}, expected {c}x{}",
                    warm.rows(),
                    warm.cols(),
                    x.cols()
                ));
            }
            warm
        }
    };

    let d = x.cols();
    let mut assign = vec![0usize; n];
    let mut sizes = vec![0usize; c];
    let mut prev_inertia = f64::INFINITY;
    let mut iterations = 0usize;
    let mut converged = false;

    for _ in 0..config.max_iters {
        iterations += 1;

        // Assignment step; ties go to the lowest cluster index.
        let mut inertia = 0.0f64;
        for i in 0..n {
            let row = x.row(i);
            let mut best = 0usize;
            let mut best_d = dist2(row, centroids.row(0));
            for j in 1..c {
                let dj = dist2(row, centroids.row(j));
                if dj < best_d {
                    best_d = dj;
                    best = j;
                }
            }
            assign[i] = best;
            inertia += best_d;
        }
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-12) + 1e-9,
            "inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;

        // Update step: means in f64.
        let mut acc = vec![0.0f64; c * d];
        sizes.iter_mut().for_each(|s| *s = 0);
        for i in 0..n {
            let a = assign[i];
            sizes[a] += 1;
            let row = x.row(i);
            let dst = &mut acc[a * d..(a + 1) * d];
            for (s, &v) in dst.iter_mut().zip(row) {
                *s += v as f64;
            }
        }
        let mut new_centroids = Matrix::zeros(c, d);
        for j in 0..c {
            if sizes[j] == 0 {
                continue;
            }
            let src = &acc[j * d..(j + 1) * d];
            let dst = new_centroids.row_mut(j);
            for (o, &s) in dst.iter_mut().zip(src) {
                *o = (s / sizes[j] as f64) as f32;
            }
        }

        // Repair empty clusters: move the farthest point of the largest
        // cluster into each empty slot.
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let largest = sizes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
                .expect("at least one cluster");
            debug_assert!(sizes[largest] > 1, "cannot repair from a singleton");
            let mut far = usize::MAX;
            let mut far_d = -1.0f64;
            for i in 0..n {
                if assign[i] != largest {
                    continue;
                }
                let di = dist2(x.row(i), new_centroids.row(largest));
                if di > far_d {
                    far_d = di;
                    far = i;
                }
            }
            new_centroids.row_mut(empty).copy_from_slice(x.row(far));
            assign[far] = empty;
            sizes[largest] -= 1;
            sizes[empty] = 1;
        }

        let mut movement = 0.0f64;
        for j in 0..c {
            movement = movement.max(libm::sqrt(dist2(centroids.row(j), new_centroids.row(j))));
        }
        centroids = new_centroids;
        if movement < config.tol {
            converged = true;
            break;
        }
    }

    let inertia = total_inertia(x, &assign, &centroids);
    Ok(Clustering {
        n_tokens: n,
        n_clusters: c,
        assign,
        centroids,
        sizes,
        inertia,
        iterations,
        converged,
    })
}

/// Cache slot identifier: one clustering per (layer, head, tensor role).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey {
    pub layer: u32,
    pub head: u32,
    pub role: TensorRole,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    centroids: Matrix,
    step: usize,
}

/// Centroids carried across consecutive steps, keyed by
/// (layer, head, role). Callers serialize access per key; distinct keys are
/// independent.
#[derive(Debug, Default)]
pub struct CentroidCache {
    entries: BTreeMap<CacheKey, CacheEntry>,
}

impl CentroidCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<(&Matrix, usize)> {
        self.entries.get(key).map(|e| (&e.centroids, e.step))
    }

    pub fn put(&mut self, key: CacheKey, centroids: Matrix, step: usize) {
        self.entries.insert(key, CacheEntry { centroids, step });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[derive(Debug, Clone)]
pub struct WarmStartConfig {
    /// Master seed; the per-key stream is derived from it.
    pub seed: u64,
    pub cold_max_iters: usize,
    pub warm_max_iters: usize,
    pub tol: f64,
}

impl WarmStartConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            cold_max_iters: DEFAULT_COLD_MAX_ITERS,
            warm_max_iters: DEFAULT_WARM_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

/// Cluster `x`, reusing cached centroids for `key` when their shape matches;
/// otherwise falls back to k-means++ with the cold iteration cap. The cache
/// is updated with the result.
pub fn warm_start(
    x: &Matrix,
    c: usize,
    cache: &mut CentroidCache,
    key: CacheKey,
    step: usize,
    config: &WarmStartConfig,
) -> Result<Clustering> {
    let seed = derive_seed(config.seed, &[key.layer as u64, key.head as u64, key.role as u64]);
    let (init, max_iters) = match cache.get(&key) {
        Some((centroids, _)) if centroids.rows() == c && centroids.cols() == x.cols() => {
            (KmeansInit::Warm(centroids.clone()), config.warm_max_iters)
        }
        _ => (KmeansInit::PlusPlus, config.cold_max_iters),
    };
    let kconfig = KmeansConfig {
        seed,
        max_iters,
        tol: config.tol,
    };
    let clustering = kmeans(x, c, &kconfig, init)?;
    cache.put(key, clustering.centroids().clone(), step);
    Ok(clustering)
}

fn comb2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand Index between two label vectors over the same points.
///
/// Chance-corrected pair-counting agreement in `[-1, 1]`; 1 means identical
/// partitions up to relabeling.
pub fn ari_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(param_err!(
            "partitions cover {} vs {} points",
            a.len(),
            b.len()
        ));
    }
    let n = a.len() as u64;
    if n == 0 {
        return Err(param_err!("partitions are empty"));
    }
    if n < 2 {
        return Ok(1.0);
    }

    // Remap labels to 0..k in first-seen order; a linear scan over the
    // distinct labels beats a map at the cluster counts seen here.
    let compact = |labels: &[usize]| {
        let mut seen: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let id = seen.iter().position(|&s| s == l).unwrap_or_else(|| {
                seen.push(l);
                seen.len() - 1
            });
            out.push(id);
        }
        (out, seen.len())
    };
    let (ca, ka) = compact(a);
    let (cb, kb) = compact(b);

    let mut contingency = vec![0u64; ka * kb];
    let mut row_sums = vec![0u64; ka];
    let mut col_sums = vec![0u64; kb];
    for (&x, &y) in ca.iter().zip(&cb) {
        contingency[x * kb + y] += 1;
        row_sums[x] += 1;
        col_sums[y] += 1;
    }

    let sum_ij: f64 = contingency.iter().map(|&v| comb2(v)).sum();
    let sum_a: f64 = row_sums.iter().map(|&v| comb2(v)).sum();
    let sum_b: f64 = col_sums.iter().map(|&v| comb2(v)).sum();
    let n_pairs = comb2(n);

    let expected = sum_a * sum_b / n_pairs;
    let max_index = (sum_a + sum_b) / 2.0;
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((sum_ij - expected) / (max_index - expected))
}

/// ARI between two clusterings of the same token set.
pub fn adjusted_rand_index(a: &Clustering, b: &Clustering) -> Result<f64> {
    ari_labels(a.assignments(), b.assignments())
}
