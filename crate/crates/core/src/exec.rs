//! Sparse attention execution over a selection plan with variable-size
//! cluster blocks.
//!
//! Q, K and V are permuted into cluster-contiguous order, the selected key
//! and value rows of each query cluster are gathered into one contiguous
//! buffer, attention is computed over that buffer with a streaming softmax
//! (one pass per selected key cluster, flash-style running max / sum /
//! accumulator), and the output is scattered back and unpermuted. The result
//! matches the masked renormalized reference within reordering tolerance.

use alloc::{vec, vec::Vec};
use core::ops::Range;

use crate::attention::AttentionInputs;
use crate::error::{contract_err, internal_err, shape_err, Result};
use crate::matrix::Matrix;
use crate::permutation::{apply, unpermute_output};
use crate::selection::SelectionPlan;

/// Row ranges, in permuted coordinates, that realize a plan: one contiguous
/// query range per query cluster and, per query cluster, the ordered selected
/// key ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatherPlan {
    pub query_ranges: Vec<Range<usize>>,
    pub key_ranges: Vec<Vec<Range<usize>>>,
}

fn prefix_ranges(sizes: &[usize]) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &s in sizes {
        out.push(offset..offset + s);
        offset += s;
    }
    out
}

/// Resolve a plan's cluster ids into permuted row ranges.
pub fn gather_plan(plan: &SelectionPlan) -> GatherPlan {
    let query_ranges = prefix_ranges(plan.q_clustering().sizes());
    let key_cluster_ranges = prefix_ranges(plan.k_clustering().sizes());
    let key_ranges = (0..plan.n_query_clusters())
        .map(|i| {
            plan.selected(i)
                .iter()
                .map(|&j| key_cluster_ranges[j].clone())
                .collect()
        })
        .collect();
    GatherPlan {
        query_ranges,
        key_ranges,
    }
}

/// Execute attention over the plan's selected cluster pairs.
///
/// Per query row, selected key clusters are visited in plan order with a
/// streaming softmax: each cluster block contributes under the running
/// maximum, and previously accumulated sums are rescaled when the maximum
/// moves. Output rows come back in original token order.
pub fn execute(inp: &AttentionInputs, plan: &SelectionPlan) -> Result<Matrix> {
    if plan.q_clustering().n_tokens() != inp.n_q() || plan.k_clustering().n_tokens() != inp.n_k() {
        return Err(shape_err!(
            "plan covers {}x{} tokens, inputs are {}x{}",
            plan.q_clustering().n_tokens(),
            plan.k_clustering().n_tokens(),
            inp.n_q(),
            inp.n_k()
        ));
    }
    let c_k = plan.k_clustering().n_clusters();
    let d = inp.head_dim();
    let d_out = inp.v().cols();
    let scale = inp.scale() as f64;

    let q_perm = apply(plan.q_permutation(), inp.q())?;
    let k_perm = apply(plan.k_permutation(), inp.k())?;
    let v_perm = apply(plan.k_permutation(), inp.v())?;

    let gather = gather_plan(plan);
    let mut out = vec![0.0f32; inp.n_q() * d_out];

    for (qi, q_range) in gather.query_ranges.iter().enumerate() {
        let selected = &gather.key_ranges[qi];
        if selected.is_empty() {
            return Err(contract_err!("query cluster {qi} selects no key clusters"));
        }
        for &j in plan.selected(qi) {
            if j >= c_k {
                return Err(internal_err!("selected key cluster {j} out of range"));
            }
        }
        // Stage the selected key/value rows contiguously, recording cluster
        // segment boundaries within the staging buffer.
        let gathered: usize = selected.iter().map(|r| r.len()).sum();
        let mut k_buf = vec![0.0f32; gathered * d];
        let mut v_buf = vec![0.0f32; gathered * d_out];
        let mut segments: Vec<Range<usize>> = Vec::with_capacity(selected.len());
        let mut cursor = 0usize;
        for r in selected {
            let len = r.len();
            k_buf[cursor * d..(cursor + len) * d]
                .copy_from_slice(&k_perm.data()[r.start * d..r.end * d]);
            v_buf[cursor * d_out..(cursor + len) * d_out]
                .copy_from_slice(&v_perm.data()[r.start * d_out..r.end * d_out]);
            segments.push(cursor..cursor + len);
            cursor += len;
        }

        let mut scores = vec![0.0f64; gathered];
        let mut acc = vec![0.0f64; d_out];
        for q_row_idx in q_range.clone() {
            let q_row = q_perm.row(q_row_idx);
            let mut running_max = f64::NEG_INFINITY;
            let mut running_sum = 0.0f64;
            acc.iter_mut().for_each(|a| *a = 0.0);

            for segment in &segments {
                // Block scores and block max.
                let mut block_max = f64::NEG_INFINITY;
                for t in segment.clone() {
                    let k_row = &k_buf[t * d..(t + 1) * d];
                    let mut dot = 0.0f64;
                    for c in 0..d {
                        dot += q_row[c] as f64 * k_row[c] as f64;
                    }
                    let s = dot * scale;
                    scores[t] = s;
                    block_max = block_max.max(s);
                }
                // Merge into the running accumulator.
                let new_max = running_max.max(block_max);
                if new_max > running_max && running_sum > 0.0 {
                    let rescale = libm::exp(running_max - new_max);
                    running_sum *= rescale;
                    acc.iter_mut().for_each(|a| *a *= rescale);
                }
                running_max = new_max;
                for t in segment.clone() {
                    let w = libm::exp(scores[t] - running_max);
                    running_sum += w;
                    let v_row = &v_buf[t * d_out..(t + 1) * d_out];
                    for (a, &v) in acc.iter_mut().zip(v_row) {
                        *a += w * v as f64;
                    }
                }
            }

            let out_row = &mut out[q_row_idx * d_out..(q_row_idx + 1) * d_out];
            for (o, &a) in out_row.iter_mut().zip(&acc) {
                *o = (a / running_sum) as f32;
            }
        }
    }

    unpermute_output(plan.q_permutation(), &Matrix::from_raw(inp.n_q(), d_out, out))
}

/// Multiply-add cost of the plan: `4 * |Q_i| * |K_j| * d` summed over
/// selected cluster pairs (score and value products, two flops each).
pub fn flop_count(plan: &SelectionPlan, head_dim: usize) -> u64 {
    let q_sizes = plan.q_clustering().sizes();
    let k_sizes = plan.k_clustering().sizes();
    (0..plan.n_query_clusters())
        .map(|i| {
            let keys: u64 = plan.selected(i).iter().map(|&j| k_sizes[j] as u64).sum();
            4 * q_sizes[i] as u64 * keys * head_dim as u64
        })
        .sum()
}

/// Cost with each cluster dimension rounded up to tile multiples, modelling
/// hardware that pads partial tiles. Affects only this cost model, never the
/// computed values.
pub fn flop_count_tiled(
    plan: &SelectionPlan,
    head_dim: usize,
    tile_m: usize,
    tile_n: usize,
) -> u64 {
    let round_up = |x: usize, t: usize| if t <= 1 { x } else { x.div_ceil(t) * t };
    let q_sizes = plan.q_clustering().sizes();
    let k_sizes = plan.k_clustering().sizes();
    (0..plan.n_query_clusters())
        .map(|i| {
            let q = round_up(q_sizes[i], tile_m) as u64;
            let keys: u64 = plan
                .selected(i)
                .iter()
                .map(|&j| round_up(k_sizes[j], tile_n) as u64)
                .sum();
            4 * q * keys * head_dim as u64
        })
        .sum()
}
