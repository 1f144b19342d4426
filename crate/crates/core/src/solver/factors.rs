use nalgebra::{DMatrix, DVector};

use super::assemble::{AssembledMatrix, DimBlock};
use super::spa::SpaResult;
use crate::error::{JupadError, Result};

/// Below this a component weight is treated as vanished.
pub const DEGENERATE_WEIGHT: f64 = 1e-12;

/// Weight matrices (indexed by dimension) and mixture weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorEstimate {
    pub weights: Vec<DMatrix<f64>>,
    pub mixture: DVector<f64>,
    /// Components whose weight vanished; their coefficient-side columns were
    /// reset to uniform.
    pub degenerate: Vec<usize>,
}

fn normalize_columns(m: &mut DMatrix<f64>) {
    let rows = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let s = col.sum();
        if s > 0.0 && s.is_finite() {
            col.unscale_mut(s);
        } else {
            col.fill(1.0 / rows);
        }
    }
}

/// Reads `{Bₙ}` and `λ` off `T̃ ≈ W Hᵀ`.
///
/// With `transposed = false` the factorization is of `T̃` itself: row blocks
/// of `W` are the row-side `Bⱼ` and each column block of `Hᵀ` equals
/// `Λ Bₖᵀ`. With `transposed = true` it is of `T̃ᵀ` and the sides swap.
/// `W` is first rescaled so each of its blocks is column-stochastic; the
/// inverse scaling goes into `H`.
pub fn factor_split(spa: &SpaResult, assembled: &AssembledMatrix, transposed: bool) -> Result<FactorEstimate> {
    let (anchor_side, coef_side): (&[DimBlock], &[DimBlock]) = if transposed {
        (&assembled.col_blocks, &assembled.row_blocks)
    } else {
        (&assembled.row_blocks, &assembled.col_blocks)
    };
    let rank = spa.w.ncols();
    let anchor_rows: usize = anchor_side.iter().map(|b| b.len).sum();
    let coef_rows: usize = coef_side.iter().map(|b| b.len).sum();
    if spa.w.nrows() != anchor_rows || spa.h.nrows() != coef_rows || spa.h.ncols() != rank {
        return Err(JupadError::Shape("factorization does not match the assembled blocks".into()));
    }
    let num_dims = anchor_side.len() + coef_side.len();
    let mut weights = vec![DMatrix::zeros(0, 0); num_dims];

    let mut w = spa.w.clone();
    let mut h = spa.h.clone();
    for r in 0..rank {
        let scale = w.column(r).sum() / anchor_side.len() as f64;
        if scale > 0.0 && scale.is_finite() {
            w.column_mut(r).unscale_mut(scale);
            h.column_mut(r).scale_mut(scale);
        }
    }

    for block in anchor_side {
        let mut b = w.rows(block.offset, block.len).into_owned();
        normalize_columns(&mut b);
        weights[block.dim] = b;
    }

    let mut lambda_sum = DVector::zeros(rank);
    let mut blocks = Vec::with_capacity(coef_side.len());
    for block in coef_side {
        let b = h.rows(block.offset, block.len).into_owned();
        for r in 0..rank {
            lambda_sum[r] += b.column(r).sum();
        }
        blocks.push((block.dim, b));
    }
    let mut mixture = lambda_sum.unscale(coef_side.len() as f64);
    let total: f64 = mixture.sum();
    if total > 0.0 && total.is_finite() {
        mixture.unscale_mut(total);
    } else {
        mixture.fill(1.0 / rank as f64);
    }

    let mut degenerate = Vec::new();
    for r in 0..rank {
        if mixture[r] <= DEGENERATE_WEIGHT {
            log::warn!("component {r} has vanishing weight {:.3e}; using uniform atom weights", mixture[r]);
            degenerate.push(r);
        }
    }
    for (dim, mut b) in blocks {
        for &r in &degenerate {
            b.column_mut(r).fill(0.0);
        }
        normalize_columns(&mut b);
        weights[dim] = b;
    }
    Ok(FactorEstimate {
        weights,
        mixture,
        degenerate,
    })
}
