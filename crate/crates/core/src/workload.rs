//! Synthetic attention workloads with controllable semantic structure and
//! temporal drift.
//!
//! Tokens are drawn around `G` group centers placed on a scaled simplex so
//! that all pairwise center distances equal `group_separation * group_spread`.
//! Query and key tokens share the group centers, which makes within-group
//! attention dominate by construction. The position of each group in the
//! token order is controlled by the interleave mode, and consecutive steps
//! displace the centers along fixed per-group directions while keeping each
//! token's noise fixed, so step-to-step similarity is controllable by a
//! single drift parameter.

use alloc::{vec, vec::Vec};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::attention::AttentionInputs;
use crate::error::{param_err, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

/// How groups are laid out across token positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    /// Each group occupies one contiguous run of positions.
    Blocked,
    /// Position `i` belongs to group `i % G`.
    Strided,
    /// A seeded random permutation of the blocked layout.
    Shuffled,
}

/// Relationship between query and key group labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QkLabels {
    /// Key labels follow the same layout stream as query labels (identical
    /// when `n_q == n_k`).
    Shared,
    /// Key labels are laid out from an independent stream.
    Independent,
}

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub n_q: usize,
    pub n_k: usize,
    pub d: usize,
    pub groups: usize,
    /// Within-group noise sigma.
    pub group_spread: f32,
    /// Pairwise center distance in units of `group_spread`.
    pub group_separation: f32,
    pub interleave: Interleave,
    pub qk_labels: QkLabels,
    /// Per-step center displacement (absolute).
    pub drift: f32,
    pub steps: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    fn validate(&self) -> Result<()> {
        if self.n_q == 0 || self.n_k == 0 || self.d == 0 {
            return Err(param_err!("token counts and dimension must be positive"));
        }
        if self.groups == 0 || self.groups > self.n_q.min(self.n_k) {
            return Err(param_err!(
                "groups = {} must be in [1, min(n_q, n_k) = {}]",
                self.groups,
                self.n_q.min(self.n_k)
            ));
        }
        if self.groups > self.d + 1 {
            return Err(param_err!(
                "groups = {} exceeds d + 1 = {}; equidistant centers need a simplex",
                self.groups,
                self.d + 1
            ));
        }
        if !(self.group_spread > 0.0) {
            return Err(param_err!("group_spread must be positive"));
        }
        if self.group_separation < 0.0 || self.drift < 0.0 {
            return Err(param_err!("separation and drift must be non-negative"));
        }
        if self.steps == 0 {
            return Err(param_err!("steps must be at least 1"));
        }
        Ok(())
    }
}

/// One generated step: attention inputs plus the ground-truth group labels.
#[derive(Debug, Clone)]
pub struct GeneratedStep {
    pub inputs: AttentionInputs,
    pub q_labels: Vec<usize>,
    pub k_labels: Vec<usize>,
}

// Stream tags for seed derivation.
const TAG_DIRECTIONS: u64 = 1;
const TAG_Q_LAYOUT: u64 = 2;
const TAG_K_LAYOUT: u64 = 3;
const TAG_Q_NOISE: u64 = 4;
const TAG_K_NOISE: u64 = 5;
const TAG_V_NOISE: u64 = 6;

/// Group centers at drift step `t`: a centered simplex with pairwise
/// distance `separation * sigma`, displaced by `t * drift` along fixed
/// per-group unit directions.
fn group_centers(spec: &WorkloadSpec, step: usize) -> Vec<Vec<f64>> {
    let g = spec.groups;
    let d = spec.d;
    let edge = spec.group_separation as f64 * spec.group_spread as f64;
    // Scaled standard basis e_i * c has pairwise distance c * sqrt(2).
    let c = edge / libm::sqrt(2.0);
    let mut centers = vec![vec![0.0f64; d]; g];
    for (i, center) in centers.iter_mut().enumerate() {
        for (t, v) in center.iter_mut().take(g).enumerate() {
            *v = if t == i { c * (1.0 - 1.0 / g as f64) } else { -c / g as f64 };
        }
    }
    if spec.drift > 0.0 && step > 0 {
        // One fixed random unit direction shared by all groups, so the whole
        // workload translates rigidly step to step.
        let mut rng = SplitMix64::new(derive_seed(spec.seed, &[TAG_DIRECTIONS]));
        let normal = Normal::new(0.0f64, 1.0).unwrap();
        let shift = spec.drift as f64 * step as f64;
        let dir: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        let norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            for center in centers.iter_mut() {
                for (cv, dv) in center.iter_mut().zip(&dir) {
                    *cv += shift * dv / norm;
                }
            }
        }
    }
    centers
}

/// Balanced group labels laid out per the interleave mode.
fn layout_labels(n: usize, groups: usize, interleave: Interleave, seed: u64) -> Vec<usize> {
    match interleave {
        Interleave::Strided => (0..n).map(|i| i % groups).collect(),
        Interleave::Blocked | Interleave::Shuffled => {
            let mut labels = Vec::with_capacity(n);
            for g in 0..groups {
                let count = n / groups + usize::from(g < n % groups);
                labels.extend(core::iter::repeat(g).take(count));
            }
            if matches!(interleave, Interleave::Shuffled) {
                let mut rng = SplitMix64::new(seed);
                labels.shuffle(&mut rng);
            }
            labels
        }
    }
}

fn tokens(
    labels: &[usize],
    centers: &[Vec<f64>],
    d: usize,
    sigma: f32,
    seed: u64,
) -> Result<Matrix> {
    let mut rng = SplitMix64::new(seed);
    let normal = Normal::new(0.0f64, sigma as f64).unwrap();
    let mut data = Vec::with_capacity(labels.len() * d);
    for &label in labels {
        let center = &centers[label];
        for c in center.iter().take(d) {
            data.push((c + normal.sample(&mut rng)) as f32);
        }
    }
    Matrix::from_vec(labels.len(), d, data)
}

/// Generate the inputs for one drift step. Pure function of `(spec, step)`:
/// the noise streams do not depend on the step, so `drift = 0` reproduces
/// step 0 exactly at every step.
pub fn generate(spec: &WorkloadSpec, step: usize) -> Result<GeneratedStep> {
    spec.validate()?;
    if step >= spec.steps {
        return Err(param_err!("step {step} out of range [0, {})", spec.steps));
    }
    let centers = group_centers(spec, step);

    let q_layout_seed = derive_seed(spec.seed, &[TAG_Q_LAYOUT]);
    let k_layout_seed = match spec.qk_labels {
        QkLabels::Shared => q_layout_seed,
        QkLabels::Independent => derive_seed(spec.seed, &[TAG_K_LAYOUT]),
    };
    let q_labels = layout_labels(spec.n_q, spec.groups, spec.interleave, q_layout_seed);
    let k_labels = layout_labels(spec.n_k, spec.groups, spec.interleave, k_layout_seed);

    let q = tokens(
        &q_labels,
        &centers,
        spec.d,
        spec.group_spread,
        derive_seed(spec.seed, &[TAG_Q_NOISE]),
    )?;
    let k = tokens(
        &k_labels,
        &centers,
        spec.d,
        spec.group_spread,
        derive_seed(spec.seed, &[TAG_K_NOISE]),
    )?;
    let v = tokens(
        &k_labels,
        &centers,
        spec.d,
        spec.group_spread,
        derive_seed(spec.seed, &[TAG_V_NOISE]),
    )?;

    Ok(GeneratedStep {
        inputs: AttentionInputs::new(q, k, v, spec.d)?,
        q_labels,
        k_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::full_scores;
    use crate::clustering::{ari_labels, kmeans, KmeansConfig, KmeansInit};
    use crate::metrics::density;
    use crate::oracle::oracle_topp_mask;

    fn base_spec(seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            n_q: 96,
            n_k: 96,
            d: 16,
            groups: 4,
            group_spread: 1.0,
            group_separation: 10.0,
            interleave: Interleave::Shuffled,
            qk_labels: QkLabels::Shared,
            drift: 0.0,
            steps: 3,
            seed,
        }
    }

    #[test]
    fn validation_errors() {
        let mut spec = base_spec(0);
        spec.groups = 0;
        assert!(generate(&spec, 0).is_err());
        let mut spec = base_spec(0);
        spec.groups = 200;
        assert!(generate(&spec, 0).is_err());
        let mut spec = base_spec(0);
        spec.d = 2; // groups = 4 > d + 1
        assert!(generate(&spec, 0).is_err());
        let mut spec = base_spec(0);
        spec.group_spread = 0.0;
        assert!(generate(&spec, 0).is_err());
        assert!(generate(&base_spec(0), 3).is_err());
    }

    #[test]
    fn single_group_has_zero_labels() {
        let mut spec = base_spec(1);
        spec.groups = 1;
        let step = generate(&spec, 0).unwrap();
        assert!(step.q_labels.iter().all(|&l| l == 0));
        assert!(step.k_labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn deterministic_per_spec_and_step() {
        let spec = base_spec(7);
        let a = generate(&spec, 1).unwrap();
        let b = generate(&spec, 1).unwrap();
        assert_eq!(a.inputs.q().data(), b.inputs.q().data());
        assert_eq!(a.inputs.k().data(), b.inputs.k().data());
        assert_eq!(a.inputs.v().data(), b.inputs.v().data());
        assert_eq!(a.q_labels, b.q_labels);
    }

    #[test]
    fn zero_drift_steps_are_identical() {
        let spec = base_spec(8);
        let s0 = generate(&spec, 0).unwrap();
        let s2 = generate(&spec, 2).unwrap();
        assert_eq!(s0.inputs.q().data(), s2.inputs.q().data());
        assert_eq!(s0.inputs.k().data(), s2.inputs.k().data());
    }

    #[test]
    fn drift_moves_centers_but_keeps_labels() {
        let mut spec = base_spec(9);
        spec.drift = 0.5;
        let s0 = generate(&spec, 0).unwrap();
        let s1 = generate(&spec, 1).unwrap();
        assert_ne!(s0.inputs.q().data(), s1.inputs.q().data());
        assert_eq!(s0.q_labels, s1.q_labels);
        // Displacement per token is bounded by the accumulated drift.
        for i in 0..spec.n_q {
            let d2: f64 = s0
                .inputs
                .q()
                .row(i)
                .iter()
                .zip(s1.inputs.q().row(i))
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum();
            assert!(d2.sqrt() <= 0.5 + 1e-4);
        }
    }

    #[test]
    fn kmeans_recovers_separated_groups() {
        for seed in 0..20 {
            let spec = base_spec(seed);
            let step = generate(&spec, 0).unwrap();
            let c = kmeans(
                step.inputs.q(),
                spec.groups,
                &KmeansConfig::new(seed ^ 0xABCD),
                KmeansInit::PlusPlus,
            )
            .unwrap();
            let ari = ari_labels(c.assignments(), &step.q_labels).unwrap();
            assert!(ari >= 0.99, "seed {seed}: ARI {ari}");
        }
    }

    #[test]
    fn shared_labels_match_and_independent_do_not() {
        let spec = base_spec(10);
        let shared = generate(&spec, 0).unwrap();
        assert_eq!(shared.q_labels, shared.k_labels);

        let mut spec_ind = base_spec(10);
        spec_ind.qk_labels = QkLabels::Independent;
        let ind = generate(&spec_ind, 0).unwrap();
        let ari = ari_labels(&ind.q_labels, &ind.k_labels).unwrap();
        assert!(ari.abs() < 0.2, "independent labels should look random: {ari}");
    }

    #[test]
    fn grouped_structure_sparsifies_the_oracle() {
        // With one group the scores are near-uniform and the oracle needs a
        // large budget; with several separated groups it needs much less.
        let spec_structured = base_spec(11);
        let mut spec_flat = base_spec(11);
        spec_flat.groups = 1;

        let structured = generate(&spec_structured, 0).unwrap();
        let flat = generate(&spec_flat, 0).unwrap();

        let p_structured = full_scores(&structured.inputs).unwrap();
        let p_flat = full_scores(&flat.inputs).unwrap();

        let d_structured = density(&oracle_topp_mask(&p_structured, 0.9).unwrap());
        let d_flat = density(&oracle_topp_mask(&p_flat, 0.9).unwrap());
        assert!(
            d_structured * 2.0 < d_flat,
            "structured {d_structured} vs flat {d_flat}"
        );
    }

    #[test]
    fn strided_layout_cycles_groups() {
        let mut spec = base_spec(12);
        spec.interleave = Interleave::Strided;
        let step = generate(&spec, 0).unwrap();
        for (i, &l) in step.q_labels.iter().enumerate() {
            assert_eq!(l, i % spec.groups);
        }
    }

    #[test]
    fn blocked_layout_is_contiguous() {
        let mut spec = base_spec(13);
        spec.interleave = Interleave::Blocked;
        let step = generate(&spec, 0).unwrap();
        for w in step.q_labels.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }
}
