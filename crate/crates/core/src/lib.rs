//! Semantic-aware permuted sparse attention at desk scale.
//!
//! This crate implements the full pipeline: k-means clustering of query and
//! key tokens, cluster-contiguous permutation, centroid-based top-p selection
//! of critical key clusters, variable-block sparse execution, and the oracle
//! and position-block baselines the method is evaluated against.
//!
//! Everything here is deterministic given explicit seeds, allocates through
//! `alloc`, and does float math through `libm`, so the crate stays
//! `no_std`-compatible. IO, file formats, and the experiment harness live in
//! the companion `svg2-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attention;
pub mod clustering;
pub mod error;
pub mod exec;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod permutation;
pub mod rng;
pub mod selection;
pub mod workload;

pub use attention::{dense_attention, full_scores, masked_attention, AttentionInputs, PairMask};
pub use clustering::{
    adjusted_rand_index, ari_labels, kmeans, warm_start, CacheKey, CentroidCache, Clustering,
    KmeansConfig, KmeansInit, TensorRole, WarmStartConfig,
};
pub use error::{Error, Result};
pub use exec::{execute, flop_count, flop_count_tiled, gather_plan, GatherPlan};
pub use matrix::{matmul, max_abs_diff, row_softmax, Matrix};
pub use metrics::{critical_miss_rate, density, psnr, recall, waste, MetricsRecord};
pub use oracle::{oracle_curve, oracle_topp_mask, CurvePoint, OracleCurve};
pub use permutation::{apply, permutation_from_clustering, unpermute_output, Permutation};
pub use selection::{
    cluster_mass_table, estimate_cluster_scores, plan_to_pair_mask, position_block_select,
    position_score_table, topp_select, topp_select_at_density, ClusterScoreTable, PoolKind,
    SelectionPlan,
};
pub use workload::{generate, GeneratedStep, Interleave, QkLabels, WorkloadSpec};
