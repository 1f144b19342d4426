//! Low-rank mixture-of-products model whose mode factors are convex
//! combinations of dictionary atoms.
//!
//! For rank `F`, mixture weights `λ` and per-dimension weight matrices `Bₙ`
//! (`Lₙ × F`, column-stochastic) the joint density is
//!
//! ```text
//! f(x) = Σ_r λ[r] Π_n (𝒟ₙ Bₙ[:, r])(xₙ)
//! ```
//!
//! and the discretized pairwise marginal of dimensions `(j, k)` is
//! `D̄ⱼ Bⱼ diag(λ) Bₖᵀ D̄ₖᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::atoms::{Dictionary, DiscretizedDictionary, Domain, Grid};
use crate::error::{JupadError, Result};

/// Tolerance used when validating simplex constraints at construction.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Dictionary of one dimension together with its atom weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFactor {
    basis: DiscretizedDictionary,
    weights: DMatrix<f64>,
}

impl ModeFactor {
    pub fn basis(&self) -> &DiscretizedDictionary {
        &self.basis
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.basis.dictionary()
    }

    pub fn grid(&self) -> &Grid {
        self.basis.grid()
    }

    /// `Bₙ`, shape `Lₙ × F`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Discretized mode factor `D̄ₙ Bₙ`, shape `Iₙ × F`.
    pub fn discretized_factor(&self) -> DMatrix<f64> {
        self.basis.matrix() * &self.weights
    }

    pub fn is_discrete(&self) -> bool {
        self.dictionary().domain().is_discrete()
    }

    /// Conditional densities `(𝒟ₙ Bₙ[:, r])(x)` for every component `r`.
    pub fn component_values(&self, x: f64) -> DVector<f64> {
        let atom_values = DVector::from_vec(self.dictionary().evaluate(x));
        self.weights.tr_mul(&atom_values)
    }
}

/// Marginal of a single dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal1d {
    /// Density `Σ_l w[l] atom_l(x)` with `w = Bₙ λ`.
    Continuous { dictionary: Dictionary, atom_weights: DVector<f64> },
    /// Mass function over states, `f(i) = Σ_r λ[r] Bₙ[i, r]` pushed through the
    /// (identity or general) indicator dictionary.
    Discrete { pmf: DVector<f64> },
}

impl Marginal1d {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Marginal1d::Continuous { dictionary, atom_weights } => dictionary
                .atoms()
                .iter()
                .zip(atom_weights.iter())
                .map(|(a, w)| w * a.pdf_unchecked(x))
                .sum(),
            Marginal1d::Discrete { pmf } => {
                if x.fract() == 0.0 && x >= 0.0 && (x as usize) < pmf.len() {
                    pmf[x as usize]
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    factors: Vec<ModeFactor>,
    mixture: DVector<f64>,
}

fn check_simplex(values: impl Iterator<Item = f64>, tolerance: f64, what: &str) -> Result<f64> {
    let mut sum = 0.0;
    for v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(JupadError::NotOnSimplex(format!("{what} has entry {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > tolerance {
        return Err(JupadError::NotOnSimplex(format!("{what} sums to {sum}")));
    }
    Ok(sum)
}

impl JointModel {
    /// Builds a model from discretized dictionaries, weight matrices and
    /// mixture weights. Simplex constraints are checked within
    /// [`SIMPLEX_TOLERANCE`] and then enforced exactly by renormalization.
    pub fn new(parts: Vec<(DiscretizedDictionary, DMatrix<f64>)>, mixture: DVector<f64>) -> Result<Self> {
        Self::with_tolerance(parts, mixture, SIMPLEX_TOLERANCE)
    }

    pub fn with_tolerance(
        parts: Vec<(DiscretizedDictionary, DMatrix<f64>)>,
        mixture: DVector<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        Self::build(parts, mixture, tolerance, true)
    }

    /// Checks the simplex constraints within `tolerance` but keeps the
    /// weights bit for bit (used when reading a stored model).
    pub(crate) fn from_stored(
        parts: Vec<(DiscretizedDictionary, DMatrix<f64>)>,
        mixture: DVector<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        Self::build(parts, mixture, tolerance, false)
    }

    fn build(
        parts: Vec<(DiscretizedDictionary, DMatrix<f64>)>,
        mut mixture: DVector<f64>,
        tolerance: f64,
        renormalize: bool,
    ) -> Result<Self> {
        if parts.is_empty() {
            return Err(JupadError::Shape("a model needs at least one dimension".into()));
        }
        let rank = mixture.len();
        if rank == 0 {
            return Err(JupadError::Shape("rank must be at least 1".into()));
        }
        let sum = check_simplex(mixture.iter().copied(), tolerance, "mixture weights")?;
        if renormalize {
            mixture.unscale_mut(sum);
        }
        let mut factors = Vec::with_capacity(parts.len());
        for (n, (basis, mut weights)) in parts.into_iter().enumerate() {
            if weights.nrows() != basis.num_atoms() || weights.ncols() != rank {
                return Err(JupadError::Shape(format!(
                    "dimension {n}: weights are {}x{}, expected {}x{rank}",
                    weights.nrows(),
                    weights.ncols(),
                    basis.num_atoms()
                )));
            }
            for r in 0..rank {
                let what = format!("weight column {r} of dimension {n}");
                let s = check_simplex(weights.column(r).iter().copied(), tolerance, &what)?;
                if renormalize {
                    weights.column_mut(r).unscale_mut(s);
                }
            }
            factors.push(ModeFactor { basis, weights });
        }
        Ok(JointModel { factors, mixture })
    }

    pub fn num_dims(&self) -> usize {
        self.factors.len()
    }

    pub fn rank(&self) -> usize {
        self.mixture.len()
    }

    pub fn mixture(&self) -> &DVector<f64> {
        &self.mixture
    }

    pub fn factors(&self) -> &[ModeFactor] {
        &self.factors
    }

    pub fn factor(&self, n: usize) -> Result<&ModeFactor> {
        self.factors.get(n).ok_or(JupadError::DimensionOutOfRange {
            index: n,
            dims: self.num_dims(),
        })
    }

    /// Joint density at `x`; discrete coordinates contribute masses.
    pub fn pdf_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.num_dims() {
            return Err(JupadError::Shape(format!(
                "point has {} coordinates, model has {} dimensions",
                x.len(),
                self.num_dims()
            )));
        }
        for (n, (&xn, f)) in x.iter().zip(&self.factors).enumerate() {
            if let Domain::Discrete { num_states } = f.dictionary().domain() {
                if xn.fract() != 0.0 || xn < 0.0 || xn >= num_states as f64 {
                    return Err(JupadError::Domain(format!(
                        "coordinate {n} = {xn} is not a state of a {num_states}-state dimension"
                    )));
                }
            }
        }
        Ok(self.pdf_unchecked(x))
    }

    pub(crate) fn pdf_unchecked(&self, x: &[f64]) -> f64 {
        let mut prod = self.mixture.clone();
        for (f, &xn) in self.factors.iter().zip(x) {
            prod.component_mul_assign(&f.component_values(xn));
        }
        prod.sum().max(0.0)
    }

    /// Discretized pairwise marginal `D̄ⱼ Bⱼ Λ Bₖᵀ D̄ₖᵀ`.
    pub fn pairwise_marginal(&self, j: usize, k: usize) -> Result<DMatrix<f64>> {
        if j == k || j >= self.num_dims() || k >= self.num_dims() {
            return Err(JupadError::InvalidPair { j, k });
        }
        let mut aj = self.factors[j].discretized_factor();
        let ak = self.factors[k].discretized_factor();
        for (r, &l) in self.mixture.iter().enumerate() {
            aj.column_mut(r).scale_mut(l);
        }
        Ok(aj * ak.transpose())
    }

    pub fn marginal_1d(&self, n: usize) -> Result<Marginal1d> {
        let f = self.factor(n)?;
        let atom_weights = f.weights() * &self.mixture;
        if f.is_discrete() {
            let states = f.grid().num_bins();
            let pmf = DVector::from_fn(states, |i, _| f.dictionary().evaluate(i as f64).iter().zip(atom_weights.iter()).map(|(a, w)| a * w).sum());
            Ok(Marginal1d::Discrete { pmf })
        } else {
            Ok(Marginal1d::Continuous {
                dictionary: f.dictionary().clone(),
                atom_weights,
            })
        }
    }

    /// Interval masses of the `n`th marginal on its grid, `D̄ₙ Bₙ λ`.
    pub fn discretized_marginal(&self, n: usize) -> Result<DVector<f64>> {
        let f = self.factor(n)?;
        Ok(f.basis().matrix() * (f.weights() * &self.mixture))
    }

    /// Ancestral sampling: component, then atom per dimension, then value.
    pub fn sample(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(JupadError::Config("sample count must be at least 1".into()));
        }
        let weighted = |w: &[f64]| {
            WeightedIndex::new(w.iter().copied()).map_err(|e| JupadError::NotOnSimplex(e.to_string()))
        };
        let component = weighted(self.mixture.as_slice())?;
        let mut atom_choice = Vec::with_capacity(self.num_dims());
        for f in &self.factors {
            let per_component = (0..self.rank())
                .map(|r| {
                    let col: Vec<f64> = f.weights().column(r).iter().copied().collect();
                    // columns of never-drawn components may be arbitrary
                    if self.mixture[r] > 0.0 {
                        weighted(&col).map(Some)
                    } else {
                        Ok(weighted(&col).ok())
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            atom_choice.push(per_component);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = DMatrix::zeros(count, self.num_dims());
        for s in 0..count {
            let r = component.sample(&mut rng);
            for (n, f) in self.factors.iter().enumerate() {
                let chooser = atom_choice[n][r].as_ref().expect("drawn component has valid weights");
                let l = chooser.sample(&mut rng);
                out[(s, n)] = f.dictionary().atoms()[l].sample(&mut rng);
            }
        }
        Ok(out)
    }

    /// MAP label for the features in `x` (the entry at `label_dim` is
    /// ignored). Returns the label and the posterior over labels; ties go to
    /// the lowest label.
    pub fn map_classify(&self, label_dim: usize, x: &[f64]) -> Result<(usize, DVector<f64>)> {
        let f = self.factor(label_dim)?;
        let num_states = match f.dictionary().domain() {
            Domain::Discrete { num_states } => num_states,
            Domain::Continuous { .. } => {
                return Err(JupadError::Config(format!("label dimension {label_dim} is not discrete")))
            }
        };
        if x.len() != self.num_dims() {
            return Err(JupadError::Shape(format!(
                "point has {} coordinates, model has {} dimensions",
                x.len(),
                self.num_dims()
            )));
        }
        let mut point = x.to_vec();
        let mut joint = DVector::zeros(num_states);
        for y in 0..num_states {
            point[label_dim] = y as f64;
            joint[y] = self.pdf_unchecked(&point);
        }
        let total = joint.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(JupadError::ZeroDensity("joint density is zero for every label".into()));
        }
        let mut best = 0;
        for y in 1..num_states {
            if joint[y] > joint[best] {
                best = y;
            }
        }
        Ok((best, joint.unscale(total)))
    }
}
