use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mirror::{exponentiated_step, gradient_spread};
use super::objective::{pair_gradient, pair_objective};
use super::{FitConfig, Stage, TraceRecord};
use crate::error::{JupadError, Result};

/// Estimated `Tⱼₖ = Bⱼ Λ Bₖᵀ` of one pair, on the matrix simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCoupling {
    pub pair: (usize, usize),
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct PairFit {
    pub coupling: PairCoupling,
    pub trace: Vec<TraceRecord>,
    pub objective: f64,
    /// Largest `|Σ T − 1|` observed after any normalization.
    pub max_simplex_deviation: f64,
}

/// Seeded uniform(0, 1] entries, normalized onto the simplex.
pub fn random_coupling(rows: usize, cols: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let m = DMatrix::from_fn(rows, cols, |_, _| 1.0 - rng.random::<f64>());
    let s = m.sum();
    m / s
}

/// Fits `T` for one pair by exponentiated-gradient descent from `init`.
pub fn stage1_fit_pair_from(
    pair: (usize, usize),
    target: &DMatrix<f64>,
    basis_j: &DMatrix<f64>,
    basis_k: &DMatrix<f64>,
    init: DMatrix<f64>,
    config: &FitConfig,
) -> Result<PairFit> {
    if target.nrows() != basis_j.nrows() || target.ncols() != basis_k.nrows() {
        return Err(JupadError::Shape(format!(
            "target is {}x{}, bases have {} and {} rows",
            target.nrows(),
            target.ncols(),
            basis_j.nrows(),
            basis_k.nrows()
        )));
    }
    if init.nrows() != basis_j.ncols() || init.ncols() != basis_k.ncols() {
        return Err(JupadError::Shape("initial coupling does not match the dictionary sizes".into()));
    }
    let block = format!("{}-{}", pair.0, pair.1);
    let mut t = init;
    let mut cost = pair_objective(target, basis_j, &t, basis_k);
    if !cost.is_finite() {
        return Err(JupadError::Divergence {
            rate_name: "pair_rate",
            rate: config.pair_rate,
        });
    }
    let mut trace = vec![TraceRecord::new(Stage::Pair, block.clone(), 0, cost)];
    let mut max_dev: f64 = 0.0;
    let mut candidate = t.clone();
    for iteration in 1..=config.pair_max_iters {
        if cost <= f64::MIN_POSITIVE {
            break;
        }
        let grad = pair_gradient(target, basis_j, &t, basis_k);
        let spread = gradient_spread(t.as_slice(), grad.as_slice());
        if spread == 0.0 {
            break;
        }
        let mut rate = config.pair_rate / spread;
        let mut accepted = None;
        let mut saw_finite = false;
        for _ in 0..=config.max_halvings {
            let dev = exponentiated_step(t.as_slice(), grad.as_slice(), rate, candidate.as_mut_slice());
            max_dev = max_dev.max(dev);
            let trial = pair_objective(target, basis_j, &candidate, basis_k);
            if trial.is_finite() {
                saw_finite = true;
                if trial <= cost {
                    accepted = Some(trial);
                    break;
                }
            }
            rate *= 0.5;
        }
        if !saw_finite {
            return Err(JupadError::Divergence {
                rate_name: "pair_rate",
                rate: config.pair_rate,
            });
        }
        let Some(new_cost) = accepted else { break };
        std::mem::swap(&mut t, &mut candidate);
        let decrease = (cost - new_cost) / cost;
        cost = new_cost;
        trace.push(TraceRecord::new(Stage::Pair, block.clone(), iteration, cost));
        if decrease < config.tolerance {
            break;
        }
    }
    Ok(PairFit {
        coupling: PairCoupling { pair, matrix: t },
        trace,
        objective: cost,
        max_simplex_deviation: max_dev,
    })
}

/// Fits `T` for one pair from a seeded random start; the random stream is
/// derived from the pair so results do not depend on processing order.
pub fn stage1_fit_pair(
    pair: (usize, usize),
    target: &DMatrix<f64>,
    basis_j: &DMatrix<f64>,
    basis_k: &DMatrix<f64>,
    config: &FitConfig,
) -> Result<PairFit> {
    let stream = ((pair.0 as u64) << 32) | pair.1 as u64;
    let init = random_coupling(basis_j.ncols(), basis_k.ncols(), config.seed, stream);
    stage1_fit_pair_from(pair, target, basis_j, basis_k, init, config)
}
