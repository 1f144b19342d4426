//! Ground-truth generators, the mean absolute log-likelihood ratio metric and
//! the sample-size sweep used for benchmarking.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{
    build_dictionary_grid_preset, discretize, AtomSpec, Dictionary, FamilyParam, Grid, GridPreset,
};
use crate::error::{JupadError, Result};
use crate::histogram::{ColumnMeta, Dataset};
use crate::model::JointModel;
use crate::solver::{fit, FitConfig};

/// How the conditional densities of one dimension are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyRecipe {
    /// Each component: a weighted mixture of Laplacians.
    LaplacianMix,
    /// Each component: a weighted mixture of Gaussians.
    GaussianMix,
    /// Discrete dimension; each component's mass function is drawn directly.
    DiscreteUniformWeights { states: usize },
}

fn default_mean_range() -> (f64, f64) {
    (-5.0, 5.0)
}
fn default_shape_range() -> (f64, f64) {
    (1.0, 2.0)
}
fn default_atoms() -> usize {
    5
}
fn default_truth_bins() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub dims: Vec<FamilyRecipe>,
    pub rank: usize,
    /// Atom means are drawn uniformly from this range.
    #[serde(default = "default_mean_range")]
    pub mean_range: (f64, f64),
    /// Laplacian scales / Gaussian variances are drawn uniformly from this range.
    #[serde(default = "default_shape_range")]
    pub shape_range: (f64, f64),
    #[serde(default = "default_atoms")]
    pub atoms_per_component: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bins of the grid attached to continuous dimensions of the truth.
    #[serde(default = "default_truth_bins")]
    pub truth_bins: usize,
}

impl SynthSpec {
    pub fn new(dims: Vec<FamilyRecipe>, rank: usize, seed: u64) -> Self {
        SynthSpec {
            dims,
            rank,
            mean_range: default_mean_range(),
            shape_range: default_shape_range(),
            atoms_per_component: default_atoms(),
            seed,
            truth_bins: default_truth_bins(),
        }
    }

    /// Five dimensions, rank 10, Laplacian mixtures.
    pub fn laplacian_experiment(seed: u64) -> Self {
        Self::new(vec![FamilyRecipe::LaplacianMix; 5], 10, seed)
    }

    /// Six dimensions, rank 8, Gaussian mixtures.
    pub fn gaussian_experiment(seed: u64) -> Self {
        Self::new(vec![FamilyRecipe::GaussianMix; 6], 8, seed)
    }

    /// Seven dimensions, rank 10: five Laplacian-mixture dimensions followed
    /// by Gaussian-mixture dimensions.
    pub fn mixed_experiment(seed: u64) -> Self {
        let mut dims = vec![FamilyRecipe::LaplacianMix; 5];
        dims.extend([FamilyRecipe::GaussianMix; 2]);
        Self::new(dims, 10, seed)
    }

    /// Four dimensions, rank 8; the last one discrete with 10 states.
    pub fn hybrid_experiment(seed: u64) -> Self {
        let mut dims = vec![FamilyRecipe::GaussianMix; 3];
        dims.push(FamilyRecipe::DiscreteUniformWeights { states: 10 });
        Self::new(dims, 8, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(JupadError::Config("synthetic spec needs at least one dimension".into()));
        }
        if self.rank == 0 || self.atoms_per_component == 0 {
            return Err(JupadError::Config("rank and atoms_per_component must be positive".into()));
        }
        let (ml, mh) = self.mean_range;
        let (sl, sh) = self.shape_range;
        if !(ml <= mh) || !(sl > 0.0 && sl <= sh) || !ml.is_finite() || !mh.is_finite() || !sh.is_finite() {
            return Err(JupadError::Config("invalid mean or shape range".into()));
        }
        if self.truth_bins < 2 {
            return Err(JupadError::Config("truth_bins must be at least 2".into()));
        }
        for d in &self.dims {
            if let FamilyRecipe::DiscreteUniformWeights { states: 0 } = d {
                return Err(JupadError::Config("discrete dimension needs at least one state".into()));
            }
        }
        Ok(())
    }

    pub fn column_meta(&self) -> Vec<ColumnMeta> {
        self.dims
            .iter()
            .enumerate()
            .map(|(n, d)| match d {
                FamilyRecipe::DiscreteUniformWeights { states } => ColumnMeta::discrete(format!("x{n}"), *states),
                _ => ColumnMeta::continuous(format!("x{n}")),
            })
            .collect()
    }
}

fn uniform_in<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Positive weights drawn from U(0, 1] and L1-normalized.
fn simplex_draw<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| 1.0 - rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Draws a ground-truth model. Continuous dimensions get a dictionary made of
/// exactly the drawn atoms (component `r` owns atoms
/// `r·A .. (r+1)·A`), discrete dimensions an identity dictionary.
pub fn generate_ground_truth(spec: &SynthSpec) -> Result<JointModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rank = spec.rank;
    let mixture = DVector::from_vec(simplex_draw(&mut rng, rank));
    let per = spec.atoms_per_component;
    let mut parts = Vec::with_capacity(spec.dims.len());
    for recipe in &spec.dims {
        match *recipe {
            FamilyRecipe::DiscreteUniformWeights { states } => {
                let dict = Dictionary::identity(states)?;
                let mut b = DMatrix::zeros(states, rank);
                for r in 0..rank {
                    for (i, w) in simplex_draw(&mut rng, states).into_iter().enumerate() {
                        b[(i, r)] = w;
                    }
                }
                parts.push((discretize(&dict, &Grid::discrete(states)?, 1.0)?, b));
            }
            FamilyRecipe::LaplacianMix | FamilyRecipe::GaussianMix => {
                let mut atoms = Vec::with_capacity(per * rank);
                let mut b = DMatrix::zeros(per * rank, rank);
                for r in 0..rank {
                    for i in 0..per {
                        let mean = uniform_in(&mut rng, spec.mean_range);
                        let shape = uniform_in(&mut rng, spec.shape_range);
                        atoms.push(match recipe {
                            FamilyRecipe::LaplacianMix => AtomSpec::Laplacian { mean, scale: shape },
                            _ => AtomSpec::Gaussian { mean, variance: shape },
                        });
                        let _ = i;
                    }
                    for (i, w) in simplex_draw(&mut rng, per).into_iter().enumerate() {
                        b[(r * per + i, r)] = w;
                    }
                }
                let dict = Dictionary::from_atoms(atoms, 0.999)?;
                let (lo, hi) = dict.support_hull(1.0 - 1e-6);
                let grid = Grid::uniform(lo, hi, spec.truth_bins)?;
                parts.push((discretize(&dict, &grid, 0.99)?, b));
            }
        }
    }
    JointModel::new(parts, mixture)
}

/// Mean absolute log-likelihood ratio over test points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DMetric {
    /// `+∞` when the estimate vanishes at some test point.
    pub value: f64,
    /// Number of test points where the estimate is zero.
    pub zero_count: usize,
}

/// `(1/M) Σ |log(f̂(z) / f(z))|` over the rows of `points`.
pub fn d_metric(estimate: &JointModel, truth: &JointModel, points: &DMatrix<f64>) -> Result<DMetric> {
    if estimate.num_dims() != truth.num_dims() || points.ncols() != truth.num_dims() {
        return Err(JupadError::Shape("models and test points must have the same dimensions".into()));
    }
    if points.nrows() == 0 {
        return Err(JupadError::Shape("no test points".into()));
    }
    let mut sum = 0.0;
    let mut zero_count = 0;
    for row in 0..points.nrows() {
        let z: Vec<f64> = points.row(row).iter().copied().collect();
        let f = truth.pdf_eval(&z)?;
        if !(f > 0.0) {
            return Err(JupadError::ZeroDensity(format!("true density vanishes at test point {row}")));
        }
        let f_hat = estimate.pdf_eval(&z)?;
        if !(f_hat > 0.0) {
            zero_count += 1;
            continue;
        }
        sum += (f_hat.ln() - f.ln()).abs();
    }
    let value = if zero_count > 0 {
        f64::INFINITY
    } else {
        sum / points.nrows() as f64
    };
    Ok(DMetric { value, zero_count })
}

/// Dictionary used when fitting the synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionaryMode {
    /// The generator's own atoms.
    Oracle,
    /// Lattice dictionary over the sample range of each continuous column,
    /// using the family of that column's recipe.
    Inspect {
        spacing: f64,
        gaussian_variance: f64,
        laplacian_scale: f64,
        #[serde(default)]
        uniforms: usize,
    },
}

fn default_test_points() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fit: FitConfig,
    pub dictionary: DictionaryMode,
    #[serde(default = "default_test_points")]
    pub test_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n_samples: usize,
    pub mean_d: f64,
    pub std_d: f64,
    pub wall_time_s: f64,
    pub trials: usize,
    /// Trials whose estimate vanished at some test point.
    pub infinite: usize,
}

/// Dictionaries for fitting `train` under `mode`.
pub fn experiment_dictionaries(
    spec: &SynthSpec,
    truth: &JointModel,
    train: &Dataset,
    mode: &DictionaryMode,
) -> Result<Vec<Dictionary>> {
    spec.dims
        .iter()
        .enumerate()
        .map(|(n, recipe)| match (mode, recipe) {
            (_, FamilyRecipe::DiscreteUniformWeights { states }) => Dictionary::identity(*states),
            (DictionaryMode::Oracle, _) => Ok(truth.factors()[n].dictionary().clone()),
            (
                DictionaryMode::Inspect {
                    spacing,
                    gaussian_variance,
                    laplacian_scale,
                    uniforms,
                },
                _,
            ) => {
                let col = train.data().column(n);
                let family = match recipe {
                    FamilyRecipe::LaplacianMix => FamilyParam::Laplacian { scale: *laplacian_scale },
                    _ => FamilyParam::Gaussian {
                        variance: *gaussian_variance,
                    },
                };
                build_dictionary_grid_preset(&GridPreset {
                    low: col.min(),
                    high: col.max().max(col.min() + spacing),
                    spacing: *spacing,
                    families: vec![family],
                    uniforms: *uniforms,
                })
            }
        })
        .collect()
}

fn derived_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b);
    rng.random()
}

/// One trial: draw the truth, then for every sample size sample, fit and score.
fn run_trial(spec: &SynthSpec, sizes: &[usize], config: &ExperimentConfig, trial: usize) -> Result<Vec<(f64, f64)>> {
    let mut trial_spec = spec.clone();
    trial_spec.seed = spec.seed.wrapping_add(trial as u64);
    let truth = generate_ground_truth(&trial_spec)?;
    let test = truth.sample(config.test_points, derived_seed(trial_spec.seed, 1, 0))?;
    let mut out = Vec::with_capacity(sizes.len());
    for &ns in sizes {
        let start = Instant::now();
        let data = truth.sample(ns, derived_seed(trial_spec.seed, 2, ns as u64))?;
        let train = Dataset::new(data, spec.column_meta(), None)?;
        let dictionaries = experiment_dictionaries(spec, &truth, &train, &config.dictionary)?;
        let fitted = fit(&train, &dictionaries, &config.fit)?;
        let d = d_metric(&fitted.model, &truth, &test)?;
        out.push((d.value, start.elapsed().as_secs_f64()));
    }
    Ok(out)
}

/// Sample-size sweep: for each trial and each size, sample, fit and compute
/// the metric; rows are ordered by `sizes`.
pub fn run_experiment(spec: &SynthSpec, sizes: &[usize], config: &ExperimentConfig, trials: usize) -> Result<Vec<ExperimentRow>> {
    spec.validate()?;
    config.fit.validate()?;
    if trials == 0 || sizes.is_empty() {
        return Err(JupadError::Config("need at least one trial and one sample size".into()));
    }
    let trial_ids: Vec<usize> = (0..trials).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Vec<(f64, f64)>> = if config.fit.strict_deterministic {
        trial_ids.iter().map(|&t| run_trial(spec, sizes, config, t)).collect::<Result<_>>()?
    } else {
        trial_ids.par_iter().map(|&t| run_trial(spec, sizes, config, t)).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Vec<(f64, f64)>> = trial_ids.iter().map(|&t| run_trial(spec, sizes, config, t)).collect::<Result<_>>()?;

    Ok(sizes
        .iter()
        .enumerate()
        .map(|(i, &ns)| {
            let values: Vec<f64> = results.iter().map(|r| r[i].0).collect();
            let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
            let infinite = values.len() - finite.len();
            let (mean_d, std_d) = if infinite > 0 {
                (f64::INFINITY, f64::NAN)
            } else {
                let m = finite.iter().sum::<f64>() / finite.len() as f64;
                let var = finite.iter().map(|v| (v - m).powi(2)).sum::<f64>() / finite.len() as f64;
                (m, var.sqrt())
            };
            ExperimentRow {
                n_samples: ns,
                mean_d,
                std_d,
                wall_time_s: results.iter().map(|r| r[i].1).sum::<f64>(),
                trials,
                infinite,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_presets() {
        let e1 = SynthSpec::laplacian_experiment(0);
        assert_eq!((e1.dims.len(), e1.rank), (5, 10));
        let e4 = SynthSpec::hybrid_experiment(0);
        assert_eq!((e4.dims.len(), e4.rank), (4, 8));
        assert_eq!(e4.dims[3], FamilyRecipe::DiscreteUniformWeights { states: 10 });
    }

    #[test]
    fn ground_truth_is_on_simplex() {
        let m = generate_ground_truth(&SynthSpec::hybrid_experiment(3)).unwrap();
        assert!((m.mixture().sum() - 1.0).abs() < 1e-12);
        for f in m.factors() {
            for c in f.weights().column_iter() {
                assert!((c.sum() - 1.0).abs() < 1e-12);
                assert!(c.iter().all(|&v| v >= 0.0));
            }
        }
        assert_eq!(m.factors()[0].dictionary().len(), 40);
    }

    #[test]
    fn ground_truth_reproducible() {
        let a = generate_ground_truth(&SynthSpec::laplacian_experiment(11)).unwrap();
        let b = generate_ground_truth(&SynthSpec::laplacian_experiment(11)).unwrap();
        let c = generate_ground_truth(&SynthSpec::laplacian_experiment(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn metric_of_identical_models_is_zero() {
        let m = generate_ground_truth(&SynthSpec::hybrid_experiment(1)).unwrap();
        let pts = m.sample(200, 5).unwrap();
        let d = d_metric(&m, &m, &pts).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.zero_count, 0);
    }
}
