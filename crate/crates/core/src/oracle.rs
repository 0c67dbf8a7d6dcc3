//! Oracle top-p selection: the per-query upper bound every practical
//! selector is compared against.
//!
//! Given the true attention scores, each query keeps the minimal
//! descending-score prefix of keys whose cumulative mass reaches the target.
//! Sweeping the target over a grid yields the recall-versus-density curve.

use alloc::{vec, vec::Vec};

use crate::attention::PairMask;
use crate::error::{param_err, Result};
use crate::matrix::Matrix;
use crate::metrics;

/// One sampled point of a recall-versus-density trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub density: f64,
    pub recall: f64,
}

/// A sampled recall-versus-density curve.
///
/// Densities are strictly increasing (budgets that select identical masks are
/// collapsed into one point) and the curve always terminates at the
/// full-budget point, so the last entry is (1, 1) up to float rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCurve {
    points: Vec<CurvePoint>,
}

impl OracleCurve {
    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }
}

/// The default budget grid {0.05, 0.10, ..., 1.00}.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

fn validate_target(target_p: f64) -> Result<()> {
    if !(target_p > 0.0 && target_p <= 1.0) {
        return Err(param_err!("target_p must be in (0, 1], got {target_p}"));
    }
    Ok(())
}

/// Row indices of `row` sorted by descending value, ties by ascending index.
pub(crate) fn descending_order(row: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_unstable_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// Per-query minimal top-p key sets from true attention scores.
///
/// Keys are taken in descending score order until the selected mass reaches
/// `target_p` of the row's total mass; the coverage target is relative to the
/// row total so the per-row recall guarantee survives rows whose float sum is
/// not exactly one. At `target_p = 1` every key with positive score is
/// selected. Each row selects at least one key.
pub fn oracle_topp_mask(p_scores: &Matrix, target_p: f64) -> Result<PairMask> {
    validate_target(target_p)?;
    let (n_q, n_k) = (p_scores.rows(), p_scores.cols());
    let mut grid = vec![false; n_q * n_k];
    for qi in 0..n_q {
        let row = p_scores.row(qi);
        let order = descending_order(row);
        let sel = &mut grid[qi * n_k..(qi + 1) * n_k];
        if target_p == 1.0 {
            for &ki in &order {
                if row[ki] > 0.0 {
                    sel[ki] = true;
                }
            }
            if !sel.iter().any(|&s| s) {
                sel[order[0]] = true;
            }
            continue;
        }
        let total: f64 = row.iter().map(|&v| v as f64).sum();
        let threshold = target_p * total;
        let mut cum = 0.0f64;
        for (rank, &ki) in order.iter().enumerate() {
            if rank > 0 && (cum >= threshold || row[ki] <= 0.0) {
                break;
            }
            sel[ki] = true;
            cum += row[ki] as f64;
        }
    }
    PairMask::from_grid(n_q, n_k, grid)
}

/// Sweep the oracle over a budget grid and record (density, recall) points.
///
/// `grid` must be non-empty, sorted ascending, with every value in (0, 1].
/// The full-budget point is appended when the grid does not end at 1, and
/// consecutive budgets that produce the same mask collapse to a single point.
pub fn oracle_curve(p_scores: &Matrix, grid: &[f64]) -> Result<OracleCurve> {
    if grid.is_empty() {
        return Err(param_err!("budget grid is empty"));
    }
    for pair in grid.windows(2) {
        if pair[1] < pair[0] {
            return Err(param_err!("budget grid must be sorted ascending"));
        }
    }
    let mut budgets: Vec<f64> = grid.to_vec();
    if *budgets.last().unwrap() < 1.0 {
        budgets.push(1.0);
    }
    let mut points: Vec<CurvePoint> = Vec::with_capacity(budgets.len());
    for &p in &budgets {
        validate_target(p)?;
        let mask = oracle_topp_mask(p_scores, p)?;
        let point = CurvePoint {
            density: metrics::density(&mask),
            recall: metrics::recall(&mask, p_scores)?,
        };
        match points.last() {
            Some(last) if last.density == point.density => {}
            _ => points.push(point),
        }
    }
    debug_assert!(points.windows(2).all(|w| w[0].recall <= w[1].recall + 1e-12));
    Ok(OracleCurve { points })
}
