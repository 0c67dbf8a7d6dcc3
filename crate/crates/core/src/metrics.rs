//! Evaluation quantities: density, attention recall, critical-token miss
//! rate, computation waste, and output error (max-abs, PSNR).

use alloc::string::String;

use crate::attention::PairMask;
use crate::error::{param_err, shape_err, Result};
use crate::matrix::Matrix;

/// Fraction of query-key pairs the mask computes.
pub fn density(mask: &PairMask) -> f64 {
    mask.selected_count() as f64 / (mask.n_q() * mask.n_k()) as f64
}

/// Mean over query rows of the fraction of true attention mass covered by
/// the selected pairs.
pub fn recall(mask: &PairMask, p_scores: &Matrix) -> Result<f64> {
    if p_scores.rows() != mask.n_q() || p_scores.cols() != mask.n_k() {
        return Err(shape_err!(
            "scores are {}x{}, mask is {}x{}",
            p_scores.rows(),
            p_scores.cols(),
            mask.n_q(),
            mask.n_k()
        ));
    }
    let mut acc = 0.0f64;
    for qi in 0..mask.n_q() {
        let row = p_scores.row(qi);
        let sel_row = mask.row(qi);
        let mut total = 0.0f64;
        let mut selected = 0.0f64;
        for (ki, &v) in row.iter().enumerate() {
            total += v as f64;
            if sel_row[ki] {
                selected += v as f64;
            }
        }
        debug_assert!(total > 0.0, "score row {qi} has no mass");
        acc += selected / total;
    }
    Ok(acc / mask.n_q() as f64)
}

fn check_same_shape(a: &PairMask, b: &PairMask) -> Result<()> {
    if a.n_q() != b.n_q() || a.n_k() != b.n_k() {
        return Err(shape_err!(
            "masks are {}x{} vs {}x{}",
            a.n_q(),
            a.n_k(),
            b.n_q(),
            b.n_k()
        ));
    }
    Ok(())
}

/// Fraction of oracle-selected pairs the mask fails to select.
pub fn critical_miss_rate(mask: &PairMask, oracle: &PairMask) -> Result<f64> {
    check_same_shape(mask, oracle)?;
    let mut oracle_pairs = 0u64;
    let mut missed = 0u64;
    for q in 0..mask.n_q() {
        for (m, o) in mask.row(q).iter().zip(oracle.row(q)) {
            if *o {
                oracle_pairs += 1;
                if !*m {
                    missed += 1;
                }
            }
        }
    }
    Ok(missed as f64 / oracle_pairs as f64)
}

/// Fraction of the mask's selected pairs that are not oracle-critical.
pub fn waste(mask: &PairMask, oracle: &PairMask) -> Result<f64> {
    check_same_shape(mask, oracle)?;
    let mut selected = 0u64;
    let mut non_critical = 0u64;
    for q in 0..mask.n_q() {
        for (m, o) in mask.row(q).iter().zip(oracle.row(q)) {
            if *m {
                selected += 1;
                if !*o {
                    non_critical += 1;
                }
            }
        }
    }
    Ok(non_critical as f64 / selected as f64)
}

/// Peak signal-to-noise ratio of `candidate` against `reference`, in dB.
///
/// Peak is the largest absolute entry of the reference and the MSE is
/// accumulated in f64. The scale is capped at 200 dB, which is also the
/// sentinel for an exact match.
pub fn psnr(reference: &Matrix, candidate: &Matrix) -> Result<f64> {
    if reference.rows() != candidate.rows() || reference.cols() != candidate.cols() {
        return Err(shape_err!(
            "psnr on {}x{} vs {}x{}",
            reference.rows(),
            reference.cols(),
            candidate.rows(),
            candidate.cols()
        ));
    }
    let peak = reference.max_abs() as f64;
    if peak == 0.0 {
        return Err(param_err!("psnr reference is all-zero"));
    }
    let mut se = 0.0f64;
    for (&r, &c) in reference.data().iter().zip(candidate.data()) {
        let d = r as f64 - c as f64;
        se += d * d;
    }
    let mse = se / reference.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * libm::log10(peak * peak / mse)).min(PSNR_CAP_DB))
}

/// Ceiling of the PSNR scale; exact matches report this value.
pub const PSNR_CAP_DB: f64 = 200.0;

/// All quantities recorded for one (method, budget) run on one head.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub method: String,
    pub target_p: f64,
    pub density: f64,
    pub recall: f64,
    pub miss_rate: f64,
    pub waste: f64,
    pub max_abs_err: f64,
    pub psnr_db: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl MetricsRecord {
    /// Range checks on the fraction-valued fields.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("target_p", self.target_p),
            ("density", self.density),
            ("recall", self.recall),
            ("miss_rate", self.miss_rate),
            ("waste", self.waste),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(param_err!("{name} = {v} outside [0, 1]"));
            }
        }
        if !self.max_abs_err.is_finite() || self.max_abs_err < 0.0 {
            return Err(param_err!("max_abs_err = {} invalid", self.max_abs_err));
        }
        if !self.psnr_db.is_finite() {
            return Err(param_err!("psnr_db = {} invalid", self.psnr_db));
        }
        Ok(())
    }
}
