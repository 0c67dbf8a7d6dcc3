//! Reference attention: the dense path and the masked, renormalized path
//! every sparse method is measured against.
//!
//! Masked attention renormalizes the softmax over the selected key set
//! (exclusion happens before normalization), matching how a block-sparse
//! kernel that only visits selected blocks computes. `dense_attention` is
//! literally `masked_attention` with the full mask, so "full mask equals
//! dense" holds bit-for-bit by construction.

use alloc::{vec, vec::Vec};

use crate::error::{contract_err, shape_err, Result};
use crate::matrix::{matmul, row_softmax, Matrix};

/// One attention head's worth of inputs.
#[derive(Debug, Clone)]
pub struct AttentionInputs {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    head_dim: usize,
}

impl AttentionInputs {
    pub fn new(q: Matrix, k: Matrix, v: Matrix, head_dim: usize) -> Result<Self> {
        if q.cols() != head_dim || k.cols() != head_dim {
            return Err(shape_err!(
                "q cols {} and k cols {} must equal head_dim {head_dim}",
                q.cols(),
                k.cols()
            ));
        }
        if k.rows() != v.rows() {
            return Err(shape_err!(
                "k rows {} != v rows {}",
                k.rows(),
                v.rows()
            ));
        }
        if q.rows() == 0 || k.rows() == 0 {
            return Err(shape_err!("attention inputs must have at least one token"));
        }
        Ok(Self { q, k, v, head_dim })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn n_q(&self) -> usize {
        self.q.rows()
    }

    pub fn n_k(&self) -> usize {
        self.k.rows()
    }

    /// The softmax scale `1/sqrt(head_dim)`.
    pub fn scale(&self) -> f32 {
        1.0 / libm::sqrtf(self.head_dim as f32)
    }
}

/// Dense boolean query-key selection grid. Every query row selects at least
/// one key; construction enforces this.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMask {
    n_q: usize,
    n_k: usize,
    selected: Vec<bool>,
}

impl PairMask {
    pub fn full(n_q: usize, n_k: usize) -> Self {
        Self {
            n_q,
            n_k,
            selected: vec![true; n_q * n_k],
        }
    }

    pub fn from_grid(n_q: usize, n_k: usize, selected: Vec<bool>) -> Result<Self> {
        if selected.len() != n_q * n_k {
            return Err(shape_err!(
                "mask grid length {} does not match {n_q}x{n_k}",
                selected.len()
            ));
        }
        for q in 0..n_q {
            if !selected[q * n_k..(q + 1) * n_k].iter().any(|&s| s) {
                return Err(contract_err!("query row {q} selects no keys"));
            }
        }
        Ok(Self { n_q, n_k, selected })
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn is_selected(&self, q: usize, k: usize) -> bool {
        self.selected[q * self.n_k + k]
    }

    pub fn row(&self, q: usize) -> &[bool] {
        &self.selected[q * self.n_k..(q + 1) * self.n_k]
    }

    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn is_subset_of(&self, other: &PairMask) -> bool {
        self.n_q == other.n_q
            && self.n_k == other.n_k
            && self
                .selected
                .iter()
                .zip(&other.selected)
                .all(|(&a, &b)| !a || b)
    }
}

/// Full attention output `softmax(Q K^T / sqrt(d)) V`.
pub fn dense_attention(inp: &AttentionInputs) -> Result<Matrix> {
    masked_attention(inp, &PairMask::full(inp.n_q(), inp.n_k()))
}

/// Attention restricted to the selected pairs of `mask`.
///
/// Per query row, scores are computed for the selected keys only and the
/// softmax is normalized over that subset; unselected value rows never enter
/// the weighted sum. Scores and weights are held in f64 until the final
/// store, so outputs are insensitive to the selection's storage layout.
pub fn masked_attention(inp: &AttentionInputs, mask: &PairMask) -> Result<Matrix> {
    if mask.n_q() != inp.n_q() || mask.n_k() != inp.n_k() {
        return Err(shape_err!(
            "mask is {}x{}, inputs are {}x{}",
            mask.n_q(),
            mask.n_k(),
            inp.n_q(),
            inp.n_k()
        ));
    }
    let scale = inp.scale() as f64;
    let d_out = inp.v.cols();
    let mut out = vec![0.0f32; inp.n_q() * d_out];
    let mut scores = vec![0.0f64; inp.n_k()];
    for qi in 0..inp.n_q() {
        let q_row = inp.q.row(qi);
        let sel = mask.row(qi);
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for (ki, &selected) in sel.iter().enumerate() {
            if !selected {
                continue;
            }
            any = true;
            let k_row = inp.k.row(ki);
            let mut dot = 0.0f64;
            for t in 0..inp.head_dim {
                dot += q_row[t] as f64 * k_row[t] as f64;
            }
            let s = dot * scale;
            scores[ki] = s;
            max = max.max(s);
        }
        if !any {
            return Err(contract_err!("query row {qi} has no selected keys"));
        }
        let mut norm = 0.0f64;
        let mut acc = vec![0.0f64; d_out];
        for (ki, &selected) in sel.iter().enumerate() {
            if !selected {
                continue;
            }
            let w = libm::exp(scores[ki] - max);
            norm += w;
            let v_row = inp.v.row(ki);
            for (a, &v) in acc.iter_mut().zip(v_row) {
                *a += w * v as f64;
            }
        }
        let out_row = &mut out[qi * d_out..(qi + 1) * d_out];
        for (o, &a) in out_row.iter_mut().zip(&acc) {
            *o = (a / norm) as f32;
        }
    }
    Ok(Matrix::from_raw(inp.n_q(), d_out, out))
}

/// The full attention score matrix `P = softmax(Q K^T / sqrt(d))`.
///
/// Used by the oracle policy and the evaluation metrics; the execution paths
/// never materialize it.
pub fn full_scores(inp: &AttentionInputs) -> Result<Matrix> {
    let s = matmul(&inp.q, &inp.k, true)?;
    Ok(row_softmax(&s, inp.scale()))
}
