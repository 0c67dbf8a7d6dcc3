//! Token permutations: cluster-contiguous reordering and its inverse.
//!
//! Applying consistent row permutations to Q and to K/V leaves the attention
//! output unchanged up to the inverse query permutation, so tokens can be
//! reordered into cluster-contiguous layout, computed densely per cluster
//! pair, and restored afterwards. The permutation is stored as an index map;
//! no N x N matrix is ever materialized.

use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::Clustering;
use crate::error::{param_err, shape_err, Result};
use crate::matrix::Matrix;

/// A bijection on `[0, N)` with its inverse cached.
///
/// `forward[i]` is the source row that lands at position `i` after applying
/// the permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let forward: Vec<usize> = (0..n).collect();
        Self {
            inverse: forward.clone(),
            forward,
        }
    }

    /// Validate and wrap a forward index map.
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (pos, &src) in forward.iter().enumerate() {
            if src >= n {
                return Err(param_err!("index {src} out of range for length {n}"));
            }
            if inverse[src] != usize::MAX {
                return Err(param_err!("index {src} appears twice; not a bijection"));
            }
            inverse[src] = pos;
        }
        Ok(Self { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// The inverse permutation.
    pub fn inverted(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }
}

/// Order tokens by (cluster id, original index): members of each cluster
/// become contiguous, stably, so cluster boundaries are the prefix sums of
/// the cluster sizes.
pub fn permutation_from_clustering(c: &Clustering) -> Permutation {
    let mut forward: Vec<usize> = (0..c.n_tokens()).collect();
    let assign = c.assignments();
    forward.sort_unstable_by_key(|&i| (assign[i], i));
    Permutation::from_forward(forward).expect("sorted index range is a bijection")
}

/// Reorder matrix rows: row `i` of the output is row `forward[i]` of the
/// input. Pure row moves, bit-exact.
pub fn apply(p: &Permutation, m: &Matrix) -> Result<Matrix> {
    if m.rows() != p.len() {
        return Err(shape_err!(
            "permutation over {} rows applied to {}-row matrix",
            p.len(),
            m.rows()
        ));
    }
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for (dst, &src) in p.forward.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(m.row(src));
    }
    Ok(out)
}

/// Undo the query permutation on an attention output computed in permuted
/// order, restoring original row order.
pub fn unpermute_output(p_q: &Permutation, o_perm: &Matrix) -> Result<Matrix> {
    apply(&p_q.inverted(), o_perm)
}
