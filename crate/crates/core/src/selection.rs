//! Criticality estimation and budget selection over cluster pairs.
//!
//! The semantic path scores each (query cluster, key cluster) pair by the
//! dot product of the cluster centroids, scaled like an attention score, and
//! converts the scores into an estimated attention-mass table by a softmax
//! weighted with the key-cluster sizes. Selection then keeps, per query
//! cluster, the descending-mass prefix of key clusters whose estimated mass
//! reaches the target. The positional baselines reuse exactly the same
//! scoring and selection machinery, with contiguous blocks as clusters and
//! pooled block representatives as centroids.

use alloc::{vec, vec::Vec};

use crate::attention::PairMask;
use crate::clustering::Clustering;
use crate::error::{internal_err, param_err, shape_err, Result};
use crate::matrix::Matrix;
use crate::oracle::descending_order;
use crate::permutation::{permutation_from_clustering, Permutation};

/// Pooled representative used by the positional baselines' key side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
    Max,
}

/// Pre-softmax centroid scores and the estimated per-cluster attention mass,
/// together with the clusterings they were computed from.
#[derive(Debug, Clone)]
pub struct ClusterScoreTable {
    s: Matrix,
    p_hat: Matrix,
    q_clustering: Clustering,
    k_clustering: Clustering,
}

impl ClusterScoreTable {
    pub fn c_q(&self) -> usize {
        self.s.rows()
    }

    pub fn c_k(&self) -> usize {
        self.s.cols()
    }

    /// Scaled pre-softmax centroid scores.
    pub fn scores(&self) -> &Matrix {
        &self.s
    }

    /// Estimated attention mass per (query cluster, key cluster); rows sum
    /// to one.
    pub fn p_hat(&self) -> &Matrix {
        &self.p_hat
    }

    pub fn q_clustering(&self) -> &Clustering {
        &self.q_clustering
    }

    pub fn k_clustering(&self) -> &Clustering {
        &self.k_clustering
    }
}

/// Size-weighted softmax rows: `p[j] = w[j] exp(s[j]) / sum_t w[t] exp(s[t])`,
/// computed with a max shift inside the exponent. The shift cancels in the
/// ratio, so it changes nothing mathematically.
fn size_weighted_softmax(scores: &[f64], weights: &[usize], out: &mut [f32]) {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let mut total = 0.0f64;
    for (ki, &s) in scores.iter().enumerate() {
        let w = weights[ki] as f64 * libm::exp(s - max);
        out[ki] = w as f32;
        total += w;
    }
    for o in out.iter_mut() {
        *o = (*o as f64 / total) as f32;
    }
}

/// Score every cluster pair from centroids and key-cluster sizes.
pub fn estimate_cluster_scores(
    qc: &Clustering,
    kc: &Clustering,
    head_dim: usize,
) -> Result<ClusterScoreTable> {
    if qc.centroids().cols() != head_dim || kc.centroids().cols() != head_dim {
        return Err(shape_err!(
            "centroid widths {} and {} must equal head_dim {head_dim}",
            qc.centroids().cols(),
            kc.centroids().cols()
        ));
    }
    let (c_q, c_k) = (qc.n_clusters(), kc.n_clusters());
    let scale = 1.0 / libm::sqrt(head_dim as f64);
    let mut s_store = vec![0.0f32; c_q * c_k];
    let mut p_store = vec![0.0f32; c_q * c_k];
    let mut row_scores = vec![0.0f64; c_k];
    for i in 0..c_q {
        let q_row = qc.centroids().row(i);
        for (j, slot) in row_scores.iter_mut().enumerate() {
            let k_row = kc.centroids().row(j);
            let mut dot = 0.0f64;
            for t in 0..head_dim {
                dot += q_row[t] as f64 * k_row[t] as f64;
            }
            *slot = dot * scale;
        }
        for (dst, &s) in s_store[i * c_k..(i + 1) * c_k].iter_mut().zip(&row_scores) {
            *dst = s as f32;
        }
        size_weighted_softmax(&row_scores, kc.sizes(), &mut p_store[i * c_k..(i + 1) * c_k]);
    }
    Ok(ClusterScoreTable {
        s: Matrix::from_raw(c_q, c_k, s_store),
        p_hat: Matrix::from_raw(c_q, c_k, p_store),
        q_clustering: qc.clone(),
        k_clustering: kc.clone(),
    })
}

/// Replace the estimate with the true per-cluster attention mass aggregated
/// from the full score matrix. The `scores` field holds the raw per-pair
/// mass sums. This is the exact reference the estimation path is checked
/// against.
pub fn cluster_mass_table(
    p_scores: &Matrix,
    qc: &Clustering,
    kc: &Clustering,
) -> Result<ClusterScoreTable> {
    if p_scores.rows() != qc.n_tokens() || p_scores.cols() != kc.n_tokens() {
        return Err(shape_err!(
            "scores are {}x{} but clusterings cover {}x{} tokens",
            p_scores.rows(),
            p_scores.cols(),
            qc.n_tokens(),
            kc.n_tokens()
        ));
    }
    let (c_q, c_k) = (qc.n_clusters(), kc.n_clusters());
    let mut mass = vec![0.0f64; c_q * c_k];
    for q in 0..p_scores.rows() {
        let qi = qc.assignments()[q];
        let row = p_scores.row(q);
        let dst = &mut mass[qi * c_k..(qi + 1) * c_k];
        for (k, &v) in row.iter().enumerate() {
            dst[kc.assignments()[k]] += v as f64;
        }
    }
    let mut s_store = vec![0.0f32; c_q * c_k];
    let mut p_store = vec![0.0f32; c_q * c_k];
    for i in 0..c_q {
        let row = &mass[i * c_k..(i + 1) * c_k];
        let total: f64 = row.iter().sum();
        for j in 0..c_k {
            s_store[i * c_k + j] = row[j] as f32;
            p_store[i * c_k + j] = (row[j] / total) as f32;
        }
    }
    Ok(ClusterScoreTable {
        s: Matrix::from_raw(c_q, c_k, s_store),
        p_hat: Matrix::from_raw(c_q, c_k, p_store),
        q_clustering: qc.clone(),
        k_clustering: kc.clone(),
    })
}

/// The sparse-execution contract: per query cluster, the ordered selected
/// key clusters, the estimated mass they cover, and the clusterings plus
/// permutations that position them.
#[derive(Debug, Clone)]
pub struct SelectionPlan {
    selected: Vec<Vec<usize>>,
    covered: Vec<f64>,
    target_p: f64,
    q_clustering: Clustering,
    k_clustering: Clustering,
    q_perm: Permutation,
    k_perm: Permutation,
}

impl SelectionPlan {
    pub fn n_query_clusters(&self) -> usize {
        self.selected.len()
    }

    /// Selected key clusters for query cluster `i`, in descending estimated
    /// mass order.
    pub fn selected(&self, i: usize) -> &[usize] {
        &self.selected[i]
    }

    /// Estimated mass covered by the selection for query cluster `i`.
    pub fn covered_mass(&self, i: usize) -> f64 {
        self.covered[i]
    }

    pub fn target_p(&self) -> f64 {
        self.target_p
    }

    pub fn q_clustering(&self) -> &Clustering {
        &self.q_clustering
    }

    pub fn k_clustering(&self) -> &Clustering {
        &self.k_clustering
    }

    pub fn q_permutation(&self) -> &Permutation {
        &self.q_perm
    }

    pub fn k_permutation(&self) -> &Permutation {
        &self.k_perm
    }

    /// Number of token pairs the plan computes.
    pub fn selected_pairs(&self) -> u64 {
        self.selected
            .iter()
            .enumerate()
            .map(|(i, sel)| {
                let q_size = self.q_clustering.sizes()[i] as u64;
                let k_size: u64 = sel.iter().map(|&j| self.k_clustering.sizes()[j] as u64).sum();
                q_size * k_size
            })
            .sum()
    }

    /// Fraction of token pairs computed relative to full attention.
    pub fn density(&self) -> f64 {
        let total = self.q_clustering.n_tokens() as u64 * self.k_clustering.n_tokens() as u64;
        self.selected_pairs() as f64 / total as f64
    }
}

/// Greedy top-p over the estimated mass table: per query cluster, select key
/// clusters in descending estimated mass (ties to the lower cluster id)
/// until the accumulated estimate reaches `target_p`. At `target_p = 1`
/// every key cluster is selected. At least one cluster is always selected.
pub fn topp_select(table: &ClusterScoreTable, target_p: f64) -> Result<SelectionPlan> {
    if !(target_p > 0.0 && target_p <= 1.0) {
        return Err(param_err!("target_p must be in (0, 1], got {target_p}"));
    }
    let p_hat = &table.p_hat;
    let mut selected = Vec::with_capacity(table.c_q());
    let mut covered = Vec::with_capacity(table.c_q());
    for i in 0..table.c_q() {
        let row = p_hat.row(i);
        let order = descending_order(row);
        let mut cum = 0.0f64;
        let mut sel = Vec::new();
        for (rank, &j) in order.iter().enumerate() {
            if rank > 0 && target_p < 1.0 && cum >= target_p {
                break;
            }
            sel.push(j);
            cum += row[j] as f64;
        }
        selected.push(sel);
        covered.push(cum);
    }
    Ok(SelectionPlan {
        selected,
        covered,
        target_p,
        q_clustering: table.q_clustering.clone(),
        k_clustering: table.k_clustering.clone(),
        q_perm: permutation_from_clustering(&table.q_clustering),
        k_perm: permutation_from_clustering(&table.k_clustering),
    })
}

/// Smallest plan from this table whose density reaches `target_density`.
///
/// Calibration helper for density-matched comparisons between methods: plans
/// grow monotonically with the budget, so the budget is bisected.
pub fn topp_select_at_density(
    table: &ClusterScoreTable,
    target_density: f64,
) -> Result<SelectionPlan> {
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(param_err!(
            "target_density must be in (0, 1], got {target_density}"
        ));
    }
    let minimal = topp_select(table, f64::MIN_POSITIVE)?;
    if minimal.density() >= target_density {
        return Ok(minimal);
    }
    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 1.0f64;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if topp_select(table, mid)?.density() >= target_density {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    topp_select(table, hi)
}

/// Expand a cluster-level plan to a token-level mask in original token
/// order: pair (q, k) is selected iff k's cluster is selected for q's
/// cluster.
pub fn plan_to_pair_mask(plan: &SelectionPlan) -> Result<PairMask> {
    let n_q = plan.q_clustering.n_tokens();
    let n_k = plan.k_clustering.n_tokens();
    let c_k = plan.k_clustering.n_clusters();
    let mut cluster_rows = vec![false; plan.selected.len() * c_k];
    for (i, sel) in plan.selected.iter().enumerate() {
        for &j in sel {
            if j >= c_k {
                return Err(internal_err!("selected key cluster {j} out of range"));
            }
            cluster_rows[i * c_k + j] = true;
        }
    }
    let mut grid = vec![false; n_q * n_k];
    for q in 0..n_q {
        let qi = plan.q_clustering.assignments()[q];
        let cluster_row = &cluster_rows[qi * c_k..(qi + 1) * c_k];
        let dst = &mut grid[q * n_k..(q + 1) * n_k];
        for (k, slot) in dst.iter_mut().enumerate() {
            *slot = cluster_row[plan.k_clustering.assignments()[k]];
        }
    }
    PairMask::from_grid(n_q, n_k, grid)
}

/// Contiguous positional blocks dressed up as a clustering: block `i` covers
/// tokens `[i*block, min((i+1)*block, n))` and its representative is the
/// pooled block content.
fn position_clustering(x: &Matrix, block: usize, pool: PoolKind) -> Result<Clustering> {
    if block == 0 {
        return Err(param_err!("block size must be positive"));
    }
    let n = x.rows();
    let d = x.cols();
    let n_blocks = n.div_ceil(block);
    let assign: Vec<usize> = (0..n).map(|i| i / block).collect();
    let mut reps = vec![0.0f32; n_blocks * d];
    for b in 0..n_blocks {
        let start = b * block;
        let end = (start + block).min(n);
        let dst = &mut reps[b * d..(b + 1) * d];
        match pool {
            PoolKind::Mean => {
                let mut acc = vec![0.0f64; d];
                for i in start..end {
                    for (a, &v) in acc.iter_mut().zip(x.row(i)) {
                        *a += v as f64;
                    }
                }
                let len = (end - start) as f64;
                for (o, &a) in dst.iter_mut().zip(&acc) {
                    *o = (a / len) as f32;
                }
            }
            PoolKind::Max => {
                dst.copy_from_slice(x.row(start));
                for i in start + 1..end {
                    for (o, &v) in dst.iter_mut().zip(x.row(i)) {
                        *o = o.max(v);
                    }
                }
            }
        }
    }
    Clustering::from_parts(assign, Matrix::from_raw(n_blocks, d, reps), x)
}

/// Score table for the position-block baseline: contiguous blocks as
/// clusters, pooled block representatives as centroids, then exactly the
/// same scoring as the semantic path. The query side always mean-pools;
/// `pool` picks the key-side pooling.
pub fn position_score_table(
    q: &Matrix,
    k: &Matrix,
    q_block: usize,
    k_block: usize,
    pool: PoolKind,
) -> Result<ClusterScoreTable> {
    if q.cols() != k.cols() {
        return Err(shape_err!(
            "q width {} != k width {}",
            q.cols(),
            k.cols()
        ));
    }
    let qc = position_clustering(q, q_block, PoolKind::Mean)?;
    let kc = position_clustering(k, k_block, pool)?;
    estimate_cluster_scores(&qc, &kc, q.cols())
}

/// Position-block baseline selection at a budget target.
pub fn position_block_select(
    q: &Matrix,
    k: &Matrix,
    q_block: usize,
    k_block: usize,
    pool: PoolKind,
    target_p: f64,
) -> Result<SelectionPlan> {
    let table = position_score_table(q, k, q_block, k_block, pool)?;
    topp_select(&table, target_p)
}
