//! Frobenius objectives of the pairwise fit and their gradients.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{JupadError, Result};

/// `‖Ẑ − D̄ⱼ T D̄ₖᵀ‖²_F`.
pub fn pair_objective(target: &DMatrix<f64>, basis_j: &DMatrix<f64>, coupling: &DMatrix<f64>, basis_k: &DMatrix<f64>) -> f64 {
    pair_residual(target, basis_j, coupling, basis_k).norm_squared()
}

/// `Ẑ − D̄ⱼ T D̄ₖᵀ`.
pub fn pair_residual(target: &DMatrix<f64>, basis_j: &DMatrix<f64>, coupling: &DMatrix<f64>, basis_k: &DMatrix<f64>) -> DMatrix<f64> {
    target - basis_j * coupling * basis_k.transpose()
}

/// Gradient of [`pair_objective`] with respect to `T`: `−2 D̄ⱼᵀ E D̄ₖ`.
pub fn pair_gradient(target: &DMatrix<f64>, basis_j: &DMatrix<f64>, coupling: &DMatrix<f64>, basis_k: &DMatrix<f64>) -> DMatrix<f64> {
    let residual = pair_residual(target, basis_j, coupling, basis_k);
    (basis_j.transpose() * residual * basis_k) * -2.0
}

/// Empirical pairwise marginals and discretized dictionaries of all
/// dimensions: the data of the joint cost
/// `J = Σ_{j<k} ‖Ẑⱼₖ − D̄ⱼ Bⱼ Λ Bₖᵀ D̄ₖᵀ‖²_F`.
#[derive(Debug, Clone)]
pub struct PairwiseProblem {
    bases: Vec<DMatrix<f64>>,
    targets: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl PairwiseProblem {
    /// `targets` must hold every pair `j < k` with shape `Iⱼ × Iₖ`.
    pub fn new(bases: Vec<DMatrix<f64>>, targets: BTreeMap<(usize, usize), DMatrix<f64>>) -> Result<Self> {
        let n = bases.len();
        if n < 2 {
            return Err(JupadError::Shape("pairwise fitting needs at least two dimensions".into()));
        }
        for j in 0..n {
            for k in j + 1..n {
                let z = targets.get(&(j, k)).ok_or_else(|| JupadError::Shape(format!("missing pair ({j}, {k})")))?;
                if z.nrows() != bases[j].nrows() || z.ncols() != bases[k].nrows() {
                    return Err(JupadError::Shape(format!(
                        "pair ({j}, {k}) is {}x{}, expected {}x{}",
                        z.nrows(),
                        z.ncols(),
                        bases[j].nrows(),
                        bases[k].nrows()
                    )));
                }
            }
        }
        if targets.len() != n * (n - 1) / 2 {
            return Err(JupadError::Shape("targets must be keyed by pairs j < k".into()));
        }
        Ok(PairwiseProblem { bases, targets })
    }

    pub fn num_dims(&self) -> usize {
        self.bases.len()
    }

    pub fn bases(&self) -> &[DMatrix<f64>] {
        &self.bases
    }

    pub fn basis(&self, n: usize) -> &DMatrix<f64> {
        &self.bases[n]
    }

    pub fn target(&self, j: usize, k: usize) -> &DMatrix<f64> {
        &self.targets[&(j, k)]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets.keys().copied()
    }

    pub fn atom_counts(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    /// Discretized mode factors `D̄ₙ Bₙ`.
    pub fn mode_factors(&self, weights: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        self.bases.iter().zip(weights).map(|(d, b)| d * b).collect()
    }

    /// Residual `Eⱼₖ = Ẑⱼₖ − Aⱼ Λ Aₖᵀ` for `j < k`.
    pub(crate) fn residual(&self, factors: &[DMatrix<f64>], mixture: &DVector<f64>, j: usize, k: usize) -> DMatrix<f64> {
        let mut scaled = factors[j].clone();
        for (r, &l) in mixture.iter().enumerate() {
            scaled.column_mut(r).scale_mut(l);
        }
        self.target(j, k) - scaled * factors[k].transpose()
    }

    pub(crate) fn pair_cost(&self, factors: &[DMatrix<f64>], mixture: &DVector<f64>, j: usize, k: usize) -> f64 {
        self.residual(factors, mixture, j, k).norm_squared()
    }

    pub fn objective(&self, weights: &[DMatrix<f64>], mixture: &DVector<f64>) -> f64 {
        let factors = self.mode_factors(weights);
        self.pairs().map(|(j, k)| self.pair_cost(&factors, mixture, j, k)).sum()
    }

    /// `∂J/∂Bₙ = Σ_{k≠n} −2 D̄ₙᵀ Eₙₖ Aₖ Λ`, with `Eₙₖ = Eₖₙᵀ` for `n > k`.
    pub fn weight_gradient(&self, weights: &[DMatrix<f64>], mixture: &DVector<f64>, n: usize) -> DMatrix<f64> {
        let factors = self.mode_factors(weights);
        self.weight_gradient_with(&factors, mixture, n)
    }

    pub(crate) fn weight_gradient_with(&self, factors: &[DMatrix<f64>], mixture: &DVector<f64>, n: usize) -> DMatrix<f64> {
        let rank = mixture.len();
        let mut acc = DMatrix::zeros(self.bases[n].nrows(), rank);
        for k in 0..self.num_dims() {
            if k == n {
                continue;
            }
            let e_ak = if n < k {
                self.residual(factors, mixture, n, k) * &factors[k]
            } else {
                self.residual(factors, mixture, k, n).tr_mul(&factors[k])
            };
            acc += e_ak;
        }
        for (r, &l) in mixture.iter().enumerate() {
            acc.column_mut(r).scale_mut(l);
        }
        self.bases[n].tr_mul(&acc) * -2.0
    }

    /// `∂J/∂λ[r] = Σ_{j<k} −2 Aⱼ[:, r]ᵀ Eⱼₖ Aₖ[:, r]`.
    pub fn mixture_gradient(&self, weights: &[DMatrix<f64>], mixture: &DVector<f64>) -> DVector<f64> {
        let factors = self.mode_factors(weights);
        self.mixture_gradient_with(&factors, mixture)
    }

    pub(crate) fn mixture_gradient_with(&self, factors: &[DMatrix<f64>], mixture: &DVector<f64>) -> DVector<f64> {
        let rank = mixture.len();
        let mut grad = DVector::zeros(rank);
        for (j, k) in self.pairs() {
            let e = self.residual(factors, mixture, j, k);
            let e_ak = &e * &factors[k];
            for r in 0..rank {
                grad[r] -= 2.0 * factors[j].column(r).dot(&e_ak.column(r));
            }
        }
        grad
    }
}
