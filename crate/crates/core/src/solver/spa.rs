//! Successive projection for separable nonnegative factorization, and the
//! nonnegative least squares solve for the coefficient matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{JupadError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpaResult {
    /// Column indices of the selected anchors, in selection order.
    pub anchors: Vec<usize>,
    /// The anchor columns of the input, shape `rows × F`.
    pub w: DMatrix<f64>,
    /// Nonnegative coefficients with `X ≈ W Hᵀ`, shape `cols × F`.
    pub h: DMatrix<f64>,
}

/// Greedy anchor selection on the L1-normalized columns of `x`: `F` times,
/// pick the column of largest Euclidean norm and project every column onto
/// the orthogonal complement of it. Zero columns are never selected.
pub fn spa_select(x: &DMatrix<f64>, rank: usize) -> Result<Vec<usize>> {
    if rank == 0 || rank > x.nrows().min(x.ncols()) {
        return Err(JupadError::RankDeficient(format!(
            "rank {rank} exceeds the dimensions of a {}x{} matrix",
            x.nrows(),
            x.ncols()
        )));
    }
    let mut residual = x.clone();
    for mut col in residual.column_iter_mut() {
        let s: f64 = col.iter().map(|v| v.abs()).sum();
        if s > 0.0 {
            col.unscale_mut(s);
        }
    }
    let initial = residual.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    if !(initial > 0.0) {
        return Err(JupadError::RankDeficient("matrix is zero".into()));
    }
    let mut anchors = Vec::with_capacity(rank);
    for step in 0..rank {
        let mut best = 0;
        let mut best_norm = -1.0;
        for (c, col) in residual.column_iter().enumerate() {
            let n = col.norm_squared();
            if n > best_norm {
                best_norm = n;
                best = c;
            }
        }
        if best_norm <= 1e-24 * initial {
            return Err(JupadError::RankDeficient(format!(
                "residual vanished after {step} of {rank} anchors"
            )));
        }
        let u = residual.column(best).unscale(best_norm.sqrt());
        let proj = u.tr_mul(&residual);
        residual -= &u * proj;
        residual.column_mut(best).fill(0.0);
        anchors.push(best);
    }
    Ok(anchors)
}

pub fn spa_extract(x: &DMatrix<f64>, rank: usize) -> Result<SpaResult> {
    let anchors = spa_select(x, rank)?;
    let w = x.select_columns(anchors.iter());
    let gram = w.tr_mul(&w);
    let cross = w.tr_mul(x);
    let mut h = DMatrix::zeros(x.ncols(), rank);
    for c in 0..x.ncols() {
        let coef = nnls_gram(&gram, &cross.column(c).into_owned());
        h.row_mut(c).copy_from(&coef.transpose());
    }
    Ok(SpaResult { anchors, w, h })
}

fn solve_subsystem(gram: &DMatrix<f64>, rhs: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub_g = DMatrix::from_fn(passive.len(), passive.len(), |a, b| gram[(passive[a], passive[b])]);
    let sub_r = DVector::from_fn(passive.len(), |a, _| rhs[passive[a]]);
    if let Some(chol) = sub_g.clone().cholesky() {
        return chol.solve(&sub_r);
    }
    sub_g
        .svd(true, true)
        .solve(&sub_r, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(passive.len()))
}

/// Lawson–Hanson active-set NNLS, `min ‖W h − x‖²` subject to `h ≥ 0`,
/// expressed through `G = WᵀW` and `c = Wᵀx`.
pub fn nnls_gram(gram: &DMatrix<f64>, cross: &DVector<f64>) -> DVector<f64> {
    let n = cross.len();
    let scale = gram.diagonal().amax().max(cross.amax()).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let mut h = DVector::zeros(n);
    let mut passive = vec![false; n];
    for _ in 0..3 * n + 10 {
        let dual = cross - gram * &h;
        let candidate = (0..n)
            .filter(|&i| !passive[i])
            .max_by(|&a, &b| dual[a].total_cmp(&dual[b]));
        let Some(t) = candidate else { break };
        if dual[t] <= tol {
            break;
        }
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let s_p = solve_subsystem(gram, cross, &idx);
            if s_p.iter().all(|&v| v > 0.0) {
                h.fill(0.0);
                for (a, &i) in idx.iter().enumerate() {
                    h[i] = s_p[a];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (a, &i) in idx.iter().enumerate() {
                if s_p[a] <= 0.0 {
                    let denom = h[i] - s_p[a];
                    if denom > 0.0 {
                        alpha = alpha.min(h[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (a, &i) in idx.iter().enumerate() {
                h[i] += alpha * (s_p[a] - h[i]);
                if h[i] <= tol {
                    h[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_picks_largest_normalized_column() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 5.0, 2.0, 1.0, 5.0, 0.0]);
        // normalized columns: (.5,.5), (.5,.5), (1,0)
        let r = spa_extract(&x, 1).unwrap();
        assert_eq!(r.anchors, vec![2]);
    }

    #[test]
    fn projection_zeroes_selected_column() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.3, 0.0, 0.7, 0.3, 0.0, 0.1, 0.4]);
        let anchors = spa_select(&x, 3).unwrap();
        let mut sorted = anchors.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 3);
    }

    #[test]
    fn rank_deficiency_detected() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert!(matches!(spa_select(&x, 2), Err(JupadError::RankDeficient(_))));
    }

    #[test]
    fn nnls_clips_negative_solution() {
        // unconstrained solution is (1, -1); constrained optimum has h[1] = 0
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let x = DVector::from_vec(vec![0.0, -1.0]);
        let h = nnls_gram(&w.tr_mul(&w), &w.tr_mul(&x));
        assert!(h.iter().all(|&v| v >= 0.0));
        // brute force over the two faces
        let best_single = |col: usize| {
            let c = w.column(col);
            let a = (c.dot(&x) / c.norm_squared()).max(0.0);
            ((c * a) - &x).norm_squared()
        };
        let expected = best_single(0).min(best_single(1)).min(x.norm_squared());
        assert!(((&w * &h) - &x).norm_squared() <= expected + 1e-12);
    }
}
