use nalgebra::{DMatrix, DVector};

use super::mirror::{exponentiated_step, gradient_spread};
use super::objective::PairwiseProblem;
use super::{FitConfig, Stage, TraceRecord};
use crate::error::{JupadError, Result};

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub weights: Vec<DMatrix<f64>>,
    pub mixture: DVector<f64>,
    pub trace: Vec<TraceRecord>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub sweeps: usize,
    /// Largest `|Σ − 1|` of any column or of `λ` right after normalization.
    pub max_simplex_deviation: f64,
}

/// Per-pair costs kept in pair order so the total is always summed the same
/// way; identical states therefore give bit-identical objectives.
struct CostCache {
    pairs: Vec<(usize, usize)>,
    costs: Vec<f64>,
}

impl CostCache {
    fn new(problem: &PairwiseProblem, factors: &[DMatrix<f64>], mixture: &DVector<f64>) -> Self {
        let pairs: Vec<_> = problem.pairs().collect();
        let costs = pairs.iter().map(|&(j, k)| problem.pair_cost(factors, mixture, j, k)).collect();
        CostCache { pairs, costs }
    }

    fn total(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// Costs after replacing the factor of `dim` (or every pair when `dim` is
    /// `None`), without committing them.
    fn trial(&self, problem: &PairwiseProblem, factors: &[DMatrix<f64>], mixture: &DVector<f64>, dim: Option<usize>) -> Vec<f64> {
        self.pairs
            .iter()
            .zip(&self.costs)
            .map(|(&(j, k), &c)| match dim {
                Some(n) if j != n && k != n => c,
                _ => problem.pair_cost(factors, mixture, j, k),
            })
            .collect()
    }
}

fn check_inputs(weights: &[DMatrix<f64>], mixture: &DVector<f64>, problem: &PairwiseProblem) -> Result<()> {
    if weights.len() != problem.num_dims() {
        return Err(JupadError::Shape(format!(
            "{} weight matrices for {} dimensions",
            weights.len(),
            problem.num_dims()
        )));
    }
    let tol = 1e-6;
    let on_simplex = |v: &mut dyn Iterator<Item = &f64>| {
        let mut s = 0.0;
        for &x in v {
            if !(x >= 0.0) {
                return false;
            }
            s += x;
        }
        (s - 1.0).abs() <= tol
    };
    if !on_simplex(&mut mixture.iter()) {
        return Err(JupadError::NotOnSimplex("initial mixture weights".into()));
    }
    for (n, b) in weights.iter().enumerate() {
        if b.nrows() != problem.basis(n).ncols() || b.ncols() != mixture.len() {
            return Err(JupadError::Shape(format!("weights of dimension {n} have the wrong shape")));
        }
        for r in 0..b.ncols() {
            if !on_simplex(&mut b.column(r).iter()) {
                return Err(JupadError::NotOnSimplex(format!("initial column {r} of dimension {n}")));
            }
        }
    }
    Ok(())
}

/// Alternating block mirror descent on the joint pairwise cost: each `Bₙ`
/// in turn, then `λ`, until a sweep no longer reduces the cost by the
/// relative tolerance.
pub fn stage3_refine(
    mut weights: Vec<DMatrix<f64>>,
    mut mixture: DVector<f64>,
    problem: &PairwiseProblem,
    config: &FitConfig,
) -> Result<RefineOutcome> {
    check_inputs(&weights, &mixture, problem)?;
    let mut factors = problem.mode_factors(&weights);
    let mut cache = CostCache::new(problem, &factors, &mixture);
    let mut cost = cache.total();
    if !cost.is_finite() {
        return Err(JupadError::Divergence {
            rate_name: "weight_rate",
            rate: config.weight_rate,
        });
    }
    let initial_objective = cost;
    let mut trace = vec![TraceRecord::new(Stage::Refine, "init".to_string(), 0, cost)];
    let mut iteration = 0;
    let mut max_dev: f64 = 0.0;
    let mut sweeps = 0;
    let rank = mixture.len();

    for _ in 0..config.refine_max_sweeps {
        sweeps += 1;
        let sweep_start = cost;
        if sweep_start <= f64::MIN_POSITIVE {
            break;
        }
        for n in 0..problem.num_dims() {
            let block = format!("B{n}");
            for _ in 0..config.refine_inner_iters {
                let grad = problem.weight_gradient_with(&factors, &mixture, n);
                let spreads: Vec<f64> = (0..rank)
                    .map(|r| gradient_spread(weights[n].column(r).as_slice(), grad.column(r).as_slice()))
                    .collect();
                if spreads.iter().all(|&s| s == 0.0) {
                    break;
                }
                let mut multiplier = 1.0;
                let mut accepted = None;
                let mut saw_finite = false;
                let mut candidate = weights[n].clone();
                for _ in 0..=config.max_halvings {
                    for r in 0..rank {
                        if spreads[r] == 0.0 {
                            continue;
                        }
                        let rate = multiplier * config.weight_rate / spreads[r];
                        let dev = exponentiated_step(
                            weights[n].column(r).as_slice(),
                            grad.column(r).as_slice(),
                            rate,
                            candidate.column_mut(r).as_mut_slice(),
                        );
                        max_dev = max_dev.max(dev);
                    }
                    let old_factor = std::mem::replace(&mut factors[n], problem.basis(n) * &candidate);
                    let costs = cache.trial(problem, &factors, &mixture, Some(n));
                    let total: f64 = costs.iter().sum();
                    if total.is_finite() {
                        saw_finite = true;
                        if total <= cost {
                            accepted = Some((costs, total));
                            break;
                        }
                    }
                    factors[n] = old_factor;
                    multiplier *= 0.5;
                }
                if !saw_finite {
                    return Err(JupadError::Divergence {
                        rate_name: "weight_rate",
                        rate: config.weight_rate,
                    });
                }
                let Some((costs, total)) = accepted else { break };
                weights[n] = candidate;
                cache.costs = costs;
                let decrease = (cost - total) / cost;
                cost = total;
                iteration += 1;
                trace.push(TraceRecord::new(Stage::Refine, block.clone(), iteration, cost));
                if decrease < config.tolerance || cost <= f64::MIN_POSITIVE {
                    break;
                }
            }
        }

        for _ in 0..config.refine_inner_iters {
            let grad = problem.mixture_gradient_with(&factors, &mixture);
            let spread = gradient_spread(mixture.as_slice(), grad.as_slice());
            if spread == 0.0 {
                break;
            }
            let mut rate = config.mixture_rate / spread;
            let mut accepted = None;
            let mut saw_finite = false;
            let mut candidate = mixture.clone();
            for _ in 0..=config.max_halvings {
                let dev = exponentiated_step(mixture.as_slice(), grad.as_slice(), rate, candidate.as_mut_slice());
                max_dev = max_dev.max(dev);
                let costs = cache.trial(problem, &factors, &candidate, None);
                let total: f64 = costs.iter().sum();
                if total.is_finite() {
                    saw_finite = true;
                    if total <= cost {
                        accepted = Some((costs, total));
                        break;
                    }
                }
                rate *= 0.5;
            }
            if !saw_finite {
                return Err(JupadError::Divergence {
                    rate_name: "mixture_rate",
                    rate: config.mixture_rate,
                });
            }
            let Some((costs, total)) = accepted else { break };
            mixture = candidate;
            cache.costs = costs;
            let decrease = (cost - total) / cost;
            cost = total;
            iteration += 1;
            trace.push(TraceRecord::new(Stage::Refine, "lambda".to_string(), iteration, cost));
            if decrease < config.tolerance || cost <= f64::MIN_POSITIVE {
                break;
            }
        }

        if sweep_start <= 0.0 || (sweep_start - cost) / sweep_start < config.tolerance {
            break;
        }
    }

    Ok(RefineOutcome {
        weights,
        mixture,
        trace,
        initial_objective,
        final_objective: cost,
        sweeps,
        max_simplex_deviation: max_dev,
    })
}
