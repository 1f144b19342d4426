//! Fitting pipeline: per-pair couplings by mirror descent, assembly of the
//! concatenated coupling matrix and separable factorization, then joint
//! refinement of all weight matrices and mixture weights.

mod assemble;
mod factors;
mod mirror;
mod objective;
mod refine;
mod spa;
mod stage1;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use assemble::{assemble_ttilde, resolve_split, AssembledMatrix, DimBlock, SplitPolicy};
pub use factors::{factor_split, FactorEstimate, DEGENERATE_WEIGHT};
pub use objective::{pair_gradient, pair_objective, pair_residual, PairwiseProblem};
pub use refine::{stage3_refine, RefineOutcome};
pub use spa::{nnls_gram, spa_extract, spa_select, SpaResult};
pub use stage1::{random_coupling, stage1_fit_pair, stage1_fit_pair_from, PairCoupling, PairFit};

use crate::atoms::{discretize, Dictionary, DiscretizedDictionary, Domain, Grid, DEFAULT_COVERAGE_THRESHOLD};
use crate::error::{JupadError, Result};
use crate::histogram::{estimate_all_pairs, propose_grid_spanning, ColumnKind, Dataset, DEFAULT_BINS};
use crate::model::JointModel;

/// Fraction of each atom's mass the fitting grid is widened to contain.
pub const GRID_ATOM_COVERAGE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pair,
    Refine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Pair => "pair",
            Stage::Refine => "refine",
        })
    }
}

/// One accepted iteration of a solver stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: Stage,
    /// `"j-k"` for pair fits, `"B<n>"`, `"lambda"` or `"init"` for refinement.
    pub block: String,
    pub iteration: usize,
    pub objective: f64,
}

impl TraceRecord {
    pub fn new(stage: Stage, block: String, iteration: usize, objective: f64) -> Self {
        TraceRecord {
            stage,
            block,
            iteration,
            objective,
        }
    }
}

fn default_rate() -> f64 {
    0.5
}
fn default_pair_iters() -> usize {
    2000
}
fn default_sweeps() -> usize {
    200
}
fn default_inner() -> usize {
    100
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_halvings() -> usize {
    20
}
fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_coverage() -> f64 {
    DEFAULT_COVERAGE_THRESHOLD
}
fn default_floor() -> f64 {
    1e-6
}

/// Solver settings.
///
/// Learning rates bound the per-step change of the log-weights: a step with
/// rate `η` on gradient `g` uses `η / (max g − min g)` as the
/// exponentiated-gradient step size, halved (at most `max_halvings` times)
/// until the objective does not increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Number of mixture components; may be omitted when a rank search
    /// supplies it.
    #[serde(default)]
    pub rank: usize,
    #[serde(default = "default_rate")]
    pub pair_rate: f64,
    #[serde(default = "default_rate")]
    pub weight_rate: f64,
    #[serde(default = "default_rate")]
    pub mixture_rate: f64,
    #[serde(default = "default_pair_iters")]
    pub pair_max_iters: usize,
    #[serde(default = "default_sweeps")]
    pub refine_max_sweeps: usize,
    #[serde(default = "default_inner")]
    pub refine_inner_iters: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_coverage")]
    pub coverage_threshold: f64,
    #[serde(default)]
    pub split: SplitPolicy,
    /// Run the separable factorization on `T̃ᵀ` instead of `T̃`.
    #[serde(default)]
    pub spa_transposed: bool,
    /// Process pairs sequentially.
    #[serde(default)]
    pub strict_deterministic: bool,
    /// Mixing weight of the uniform vector added to the factorization output
    /// so that refinement starts strictly inside the simplex.
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig::with_rank(1)
    }
}

impl FitConfig {
    pub fn with_rank(rank: usize) -> Self {
        FitConfig {
            rank,
            pair_rate: default_rate(),
            weight_rate: default_rate(),
            mixture_rate: default_rate(),
            pair_max_iters: default_pair_iters(),
            refine_max_sweeps: default_sweeps(),
            refine_inner_iters: default_inner(),
            tolerance: default_tolerance(),
            max_halvings: default_halvings(),
            seed: 0,
            bins: default_bins(),
            coverage_threshold: default_coverage(),
            split: SplitPolicy::Alternating,
            spa_transposed: false,
            strict_deterministic: false,
            positivity_floor: default_floor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(JupadError::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.rank == 0 {
            return Err(JupadError::Config("rank must be at least 1".into()));
        }
        positive("pair_rate", self.pair_rate)?;
        positive("weight_rate", self.weight_rate)?;
        positive("mixture_rate", self.mixture_rate)?;
        positive("tolerance", self.tolerance)?;
        if self.bins < 2 {
            return Err(JupadError::Config("bins must be at least 2".into()));
        }
        if !(self.coverage_threshold > 0.0 && self.coverage_threshold <= 1.0) {
            return Err(JupadError::Config("coverage_threshold must lie in (0, 1]".into()));
        }
        if self.max_halvings > 60 {
            return Err(JupadError::Config("max_halvings must be at most 60".into()));
        }
        if !(self.positivity_floor >= 0.0 && self.positivity_floor < 1.0) {
            return Err(JupadError::Config("positivity_floor must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub split_rows: Vec<usize>,
    pub split_cols: Vec<usize>,
    pub anchors: Vec<usize>,
    pub degenerate_components: Vec<usize>,
    pub pair_objectives: Vec<((usize, usize), f64)>,
    /// Joint cost right after factor extraction.
    pub stage2_objective: f64,
    pub final_objective: f64,
    pub refine_sweeps: usize,
    pub max_simplex_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: JointModel,
    pub trace: Vec<TraceRecord>,
    pub report: FitReport,
}

/// Grid for dimension `n` covering the data and the bulk of every atom.
pub fn fitting_grid(dataset: &Dataset, n: usize, dictionary: &Dictionary, bins: usize) -> Result<Grid> {
    match dictionary.domain() {
        Domain::Discrete { .. } => propose_grid_spanning(dataset, n, bins, None),
        Domain::Continuous { .. } => {
            propose_grid_spanning(dataset, n, bins, Some(dictionary.support_hull(GRID_ATOM_COVERAGE)))
        }
    }
}

fn check_dictionaries(dataset: &Dataset, dictionaries: &[Dictionary]) -> Result<()> {
    if dictionaries.len() != dataset.num_dims() {
        return Err(JupadError::Shape(format!(
            "{} dictionaries for {} dimensions",
            dictionaries.len(),
            dataset.num_dims()
        )));
    }
    for (n, (meta, dict)) in dataset.columns().iter().zip(dictionaries).enumerate() {
        match (meta.kind, dict.domain()) {
            (ColumnKind::Continuous, Domain::Continuous { .. }) => {}
            (ColumnKind::Discrete { num_states }, Domain::Discrete { num_states: c }) if num_states == c => {}
            _ => {
                return Err(JupadError::Config(format!(
                    "dictionary of dimension {n} ({}) does not match the column type",
                    meta.name
                )))
            }
        }
    }
    Ok(())
}

/// Full pipeline from samples and dictionaries to a fitted model.
pub fn fit(dataset: &Dataset, dictionaries: &[Dictionary], config: &FitConfig) -> Result<FitOutcome> {
    config.validate()?;
    check_dictionaries(dataset, dictionaries)?;
    let bases = dictionaries
        .iter()
        .enumerate()
        .map(|(n, dict)| {
            let grid = fitting_grid(dataset, n, dict, config.bins)?;
            discretize(dict, &grid, config.coverage_threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    fit_discretized(dataset, bases, config)
}

/// Pipeline with caller-supplied discretized dictionaries; their grids are
/// used for histogramming.
pub fn fit_discretized(dataset: &Dataset, bases: Vec<DiscretizedDictionary>, config: &FitConfig) -> Result<FitOutcome> {
    config.validate()?;
    if bases.len() != dataset.num_dims() {
        return Err(JupadError::Shape(format!(
            "{} dictionaries for {} dimensions",
            bases.len(),
            dataset.num_dims()
        )));
    }
    let grids: Vec<Grid> = bases.iter().map(|b| b.grid().clone()).collect();
    let histograms = estimate_all_pairs(dataset, &grids)?;
    let targets: BTreeMap<_, _> = histograms.into_iter().map(|(key, h)| (key, h.estimate)).collect();
    let problem = PairwiseProblem::new(bases.iter().map(|b| b.matrix().clone()).collect(), targets)?;

    let atom_counts = problem.atom_counts();
    let (rows, cols) = resolve_split(&config.split, &atom_counts, config.rank)?;

    let pair_fits = fit_all_pairs(&problem, config)?;
    let mut trace = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut pair_objectives = Vec::with_capacity(pair_fits.len());
    let mut couplings = BTreeMap::new();
    for fit in pair_fits {
        trace.extend(fit.trace);
        max_dev = max_dev.max(fit.max_simplex_deviation);
        pair_objectives.push((fit.coupling.pair, fit.objective));
        couplings.insert(fit.coupling.pair, fit.coupling);
    }

    let assembled = assemble_ttilde(&couplings, &rows, &cols, &atom_counts)?;
    let spa = if config.spa_transposed {
        spa_extract(&assembled.matrix.transpose(), config.rank)?
    } else {
        spa_extract(&assembled.matrix, config.rank)?
    };
    let estimate = factor_split(&spa, &assembled, config.spa_transposed)?;
    let stage2_objective = problem.objective(&estimate.weights, &estimate.mixture);

    let (weights, mixture) = apply_floor(estimate.weights, estimate.mixture, config.positivity_floor);
    let refined = stage3_refine(weights, mixture, &problem, config)?;
    trace.extend(refined.trace);
    max_dev = max_dev.max(refined.max_simplex_deviation);

    let parts = bases.into_iter().zip(refined.weights).collect();
    let model = JointModel::new(parts, refined.mixture)?;
    Ok(FitOutcome {
        model,
        trace,
        report: FitReport {
            split_rows: rows,
            split_cols: cols,
            anchors: spa.anchors,
            degenerate_components: estimate.degenerate,
            pair_objectives,
            stage2_objective,
            final_objective: refined.final_objective,
            refine_sweeps: refined.sweeps,
            max_simplex_deviation: max_dev,
        },
    })
}

fn fit_all_pairs(problem: &PairwiseProblem, config: &FitConfig) -> Result<Vec<PairFit>> {
    let pairs: Vec<(usize, usize)> = problem.pairs().collect();
    let run = |&(j, k): &(usize, usize)| stage1_fit_pair((j, k), problem.target(j, k), problem.basis(j), problem.basis(k), config);
    #[cfg(feature = "parallel")]
    if !config.strict_deterministic {
        return pairs.par_iter().map(run).collect();
    }
    pairs.iter().map(run).collect()
}

fn apply_floor(mut weights: Vec<DMatrix<f64>>, mut mixture: DVector<f64>, floor: f64) -> (Vec<DMatrix<f64>>, DVector<f64>) {
    if floor > 0.0 {
        for b in &mut weights {
            let uniform = floor / b.nrows() as f64;
            b.apply(|v| *v = (1.0 - floor) * *v + uniform);
            for mut col in b.column_iter_mut() {
                let s = col.sum();
                col.unscale_mut(s);
            }
        }
        let uniform = floor / mixture.len() as f64;
        mixture.apply(|v| *v = (1.0 - floor) * *v + uniform);
        let s = mixture.sum();
        mixture.unscale_mut(s);
    }
    (weights, mixture)
}
