//! Shared helpers for the integration and acceptance suites: independent
//! scalar oracles, enumeration utilities, and density/recall calibration.

#![allow(dead_code)]

use svg2_core::{
    estimate_cluster_scores, full_scores, kmeans, oracle_topp_mask, topp_select, AttentionInputs,
    Clustering, ClusterScoreTable, Interleave, KmeansConfig, KmeansInit, Matrix, PairMask,
    QkLabels, SelectionPlan, WorkloadSpec,
};

pub fn workload(
    n: usize,
    d: usize,
    groups: usize,
    separation: f32,
    interleave: Interleave,
    seed: u64,
) -> WorkloadSpec {
    WorkloadSpec {
        n_q: n,
        n_k: n,
        d,
        groups,
        group_spread: 1.0,
        group_separation: separation,
        interleave,
        qk_labels: QkLabels::Shared,
        drift: 0.0,
        steps: 1,
        seed,
    }
}

/// Cold-clustered semantic score table.
pub fn semantic_table(
    inputs: &AttentionInputs,
    c_q: usize,
    c_k: usize,
    seed: u64,
) -> ClusterScoreTable {
    let qc = kmeans(
        inputs.q(),
        c_q,
        &KmeansConfig::new(seed ^ 0x5157_u64),
        KmeansInit::PlusPlus,
    )
    .unwrap();
    let kc = kmeans(
        inputs.k(),
        c_k,
        &KmeansConfig::new(seed ^ 0x4B45_u64),
        KmeansInit::PlusPlus,
    )
    .unwrap();
    estimate_cluster_scores(&qc, &kc, inputs.head_dim()).unwrap()
}

/// True attention mass per (query row, key cluster), for fast exact recall
/// evaluation of cluster-level plans without expanding token masks.
pub struct RowClusterMasses {
    n_q: usize,
    c_k: usize,
    masses: Vec<f64>,
    totals: Vec<f64>,
}

impl RowClusterMasses {
    pub fn new(p_scores: &Matrix, kc: &Clustering) -> Self {
        let n_q = p_scores.rows();
        let c_k = kc.n_clusters();
        let mut masses = vec![0.0f64; n_q * c_k];
        let mut totals = vec![0.0f64; n_q];
        for q in 0..n_q {
            let row = p_scores.row(q);
            let dst = &mut masses[q * c_k..(q + 1) * c_k];
            for (k, &v) in row.iter().enumerate() {
                dst[kc.assignments()[k]] += v as f64;
                totals[q] += v as f64;
            }
        }
        Self {
            n_q,
            c_k,
            masses,
            totals,
        }
    }

    /// Mean over query rows of the true mass covered by the plan.
    pub fn recall(&self, plan: &SelectionPlan) -> f64 {
        let q_assign = plan.q_clustering().assignments();
        let mut acc = 0.0f64;
        for q in 0..self.n_q {
            let sel = plan.selected(q_assign[q]);
            let row = &self.masses[q * self.c_k..(q + 1) * self.c_k];
            let covered: f64 = sel.iter().map(|&j| row[j]).sum();
            acc += covered / self.totals[q];
        }
        acc / self.n_q as f64
    }
}

/// Smallest plan from `table` whose TRUE recall reaches `target`, found by
/// bisecting the budget (plans nest, so recall is monotone in the budget).
pub fn plan_at_true_recall(
    table: &ClusterScoreTable,
    masses: &RowClusterMasses,
    target: f64,
) -> SelectionPlan {
    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 1.0f64;
    let minimal = topp_select(table, lo).unwrap();
    if masses.recall(&minimal) >= target {
        return minimal;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if masses.recall(&topp_select(table, mid).unwrap()) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    topp_select(table, hi).unwrap()
}

/// Smallest oracle mask whose density reaches `target_density`.
pub fn oracle_mask_at_density(p_scores: &Matrix, target_density: f64) -> PairMask {
    let density = |mask: &PairMask| svg2_core::density(mask);
    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 1.0f64;
    let minimal = oracle_topp_mask(p_scores, lo).unwrap();
    if density(&minimal) >= target_density {
        return minimal;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if density(&oracle_topp_mask(p_scores, mid).unwrap()) >= target_density {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    oracle_topp_mask(p_scores, hi).unwrap()
}

/// Scores of a generated step.
pub fn scores_of(inputs: &AttentionInputs) -> Matrix {
    full_scores(inputs).unwrap()
}

/// All set partitions of `n` elements as restricted-growth label strings
/// (canonical compact labels).
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(labels: &mut Vec<usize>, pos: usize, max_used: usize, out: &mut Vec<Vec<usize>>) {
        if pos == labels.len() {
            out.push(labels.clone());
            return;
        }
        for l in 0..=max_used + 1 {
            labels[pos] = l;
            rec(labels, pos + 1, max_used.max(l), out);
        }
    }
    if n == 0 {
        return out;
    }
    // First element is always label 0.
    rec(&mut labels, 1, 0, &mut out);
    out
}

/// Brute-force pair-counting ARI: classify every unordered pair of points as
/// together/apart in each partition and apply the chance-corrected agreement
/// formula to the four pair counts.
pub fn pair_counting_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut both = 0.0f64; // together in a and b
    let mut a_only = 0.0f64; // together in a, apart in b
    let mut b_only = 0.0f64;
    let mut neither = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => a_only += 1.0,
                (false, true) => b_only += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let denom = (both + a_only) * (a_only + neither) + (both + b_only) * (b_only + neither);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (both * neither - a_only * b_only) / denom
}

/// All size-`k` subsets of `0..n` as bitmasks (n <= 16).
pub fn subsets_of_size(n: usize, k: usize) -> Vec<u32> {
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .collect()
}
