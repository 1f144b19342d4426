//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use jupad::atoms::{discretize, AtomSpec, Dictionary, Grid};
use jupad::histogram::{ColumnMeta, Dataset};
use jupad::model::JointModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn simplex_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Column-stochastic matrix with strictly positive entries.
pub fn stochastic<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for (r, v) in simplex_vec(rng, rows).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Nonnegative matrix summing to one.
pub fn joint_pmf<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
    let s = m.sum();
    m / s
}

pub fn random_atom<R: Rng>(rng: &mut R) -> AtomSpec {
    let mean = -3.0 + 6.0 * rng.random::<f64>();
    match rng.random_range(0..3) {
        0 => AtomSpec::Gaussian {
            mean,
            variance: 0.3 + 1.5 * rng.random::<f64>(),
        },
        1 => AtomSpec::Laplacian {
            mean,
            scale: 0.2 + rng.random::<f64>(),
        },
        _ => AtomSpec::Uniform {
            low: mean - 0.5 - rng.random::<f64>(),
            high: mean + 0.5 + rng.random::<f64>(),
        },
    }
}

/// Random continuous dimension: `atoms` random atoms on an equal-width grid
/// that covers them.
pub fn random_continuous_dim<R: Rng>(rng: &mut R, atoms: usize, bins: usize) -> jupad::DiscretizedDictionary {
    let list: Vec<AtomSpec> = (0..atoms).map(|_| random_atom(rng)).collect();
    let dict = Dictionary::from_atoms(list, 0.999).unwrap();
    let (lo, hi) = dict.support_hull(0.9999);
    discretize(&dict, &Grid::uniform(lo, hi, bins).unwrap(), 0.99).unwrap()
}

pub fn discrete_dim(states: usize) -> jupad::DiscretizedDictionary {
    discretize(&Dictionary::identity(states).unwrap(), &Grid::discrete(states).unwrap(), 1.0).unwrap()
}

/// Random model with the given per-dimension specification: `Some(states)`
/// for a discrete dimension, `None` for a continuous one with `atoms`
/// random atoms on `bins` bins.
pub fn random_model<R: Rng>(rng: &mut R, dims: &[Option<usize>], rank: usize, atoms: usize, bins: usize) -> JointModel {
    let parts = dims
        .iter()
        .map(|d| {
            let basis = match d {
                Some(states) => discrete_dim(*states),
                None => random_continuous_dim(rng, atoms, bins),
            };
            let w = stochastic(rng, basis.num_atoms(), rank);
            (basis, w)
        })
        .collect();
    JointModel::new(parts, DVector::from_vec(simplex_vec(rng, rank))).unwrap()
}

/// Direct evaluation from the atom specifications, without the matrix code.
pub fn brute_pdf(model: &JointModel, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for r in 0..model.rank() {
        let mut prod = model.mixture()[r];
        for (n, f) in model.factors().iter().enumerate() {
            let mut s = 0.0;
            for (l, atom) in f.dictionary().atoms().iter().enumerate() {
                s += f.weights()[(l, r)] * atom.pdf_at(x[n]).unwrap();
            }
            prod *= s;
        }
        total += prod;
    }
    total
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Simpson quadrature split at `breaks`, so kinks and jumps of the
/// integrand fall on panel boundaries. Each piece is integrated over its
/// open interior (pulled in by 1e-13 of its width) so a jump contributes
/// only its one-sided limits.
pub fn piecewise_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], n: usize) -> f64 {
    let mut pts: Vec<f64> = vec![a, b];
    pts.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    pts.sort_by(f64::total_cmp);
    pts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let d = 1e-13 * (w[1] - w[0]);
            simpson(&f, w[0] + d, w[1] - d, n)
        })
        .sum()
}

/// Points where an atom's density is not smooth.
pub fn kinks(atom: &AtomSpec) -> Vec<f64> {
    match *atom {
        AtomSpec::Laplacian { mean, .. } => vec![mean],
        AtomSpec::Uniform { low, high } => vec![low, high],
        _ => vec![],
    }
}

/// Discretized joint of every dimension as a dense tensor, flattened with
/// the first dimension varying fastest.
pub fn full_tensor(model: &JointModel) -> (Vec<usize>, Vec<f64>) {
    let factors: Vec<DMatrix<f64>> = model.factors().iter().map(|f| f.discretized_factor()).collect();
    let shape: Vec<usize> = factors.iter().map(|a| a.nrows()).collect();
    let size: usize = shape.iter().product();
    let mut out = vec![0.0; size];
    let mut idx = vec![0usize; shape.len()];
    for cell in out.iter_mut() {
        let mut v = 0.0;
        for r in 0..model.rank() {
            let mut p = model.mixture()[r];
            for (n, a) in factors.iter().enumerate() {
                p *= a[(idx[n], r)];
            }
            v += p;
        }
        *cell = v;
        for n in 0..idx.len() {
            idx[n] += 1;
            if idx[n] < shape[n] {
                break;
            }
            idx[n] = 0;
        }
    }
    (shape, out)
}

/// Sums every axis of the flattened tensor except `j` and `k`.
pub fn marginalize(shape: &[usize], tensor: &[f64], j: usize, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(shape[j], shape[k]);
    let mut idx = vec![0usize; shape.len()];
    for &v in tensor {
        out[(idx[j], idx[k])] += v;
        for n in 0..idx.len() {
            idx[n] += 1;
            if idx[n] < shape[n] {
                break;
            }
            idx[n] = 0;
        }
    }
    out
}

/// Chi-square goodness of fit; cells with expected count below 5 are merged
/// with their neighbours. Returns the p-value.
pub fn chi_square_p(observed: &[f64], probabilities: &[f64]) -> f64 {
    let n: f64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        acc.0 += o;
        acc.1 += p * n;
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let stat: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (cells.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Gaussian naive Bayes over the continuous feature columns.
pub struct GaussianNb {
    label: usize,
    features: Vec<usize>,
    priors: Vec<f64>,
    /// Per class, per feature `(mean, variance)`.
    params: Vec<Vec<(f64, f64)>>,
}

impl GaussianNb {
    pub fn fit(train: &Dataset, label: usize, classes: usize) -> Self {
        let features: Vec<usize> = (0..train.num_dims()).filter(|&c| c != label).collect();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for i in 0..train.num_samples() {
            rows[train.data()[(i, label)] as usize].push(i);
        }
        let total = train.num_samples() as f64;
        let mut overall_var: f64 = 0.0;
        for &f in &features {
            let col = train.data().column(f);
            let m = col.mean();
            overall_var = overall_var.max(col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / total);
        }
        let smoothing = 1e-9 * overall_var.max(1e-300);
        let priors = rows.iter().map(|r| r.len() as f64 / total).collect();
        let params = rows
            .iter()
            .map(|idx| {
                features
                    .iter()
                    .map(|&f| {
                        if idx.is_empty() {
                            return (0.0, 1.0);
                        }
                        let n = idx.len() as f64;
                        let m = idx.iter().map(|&i| train.data()[(i, f)]).sum::<f64>() / n;
                        let v = idx.iter().map(|&i| (train.data()[(i, f)] - m).powi(2)).sum::<f64>() / n;
                        (m, v + smoothing)
                    })
                    .collect()
            })
            .collect();
        GaussianNb {
            label,
            features,
            priors,
            params,
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for (c, (&prior, params)) in self.priors.iter().zip(&self.params).enumerate() {
            if prior == 0.0 {
                continue;
            }
            let mut ll = prior.ln();
            for (&f, &(m, v)) in self.features.iter().zip(params) {
                ll += -0.5 * ((x[f] - m).powi(2) / v + (2.0 * std::f64::consts::PI * v).ln());
            }
            if ll > best.0 {
                best = (ll, c);
            }
        }
        best.1
    }

    pub fn accuracy(&self, test: &Dataset) -> f64 {
        let hits = (0..test.num_samples())
            .filter(|&i| {
                let x = test.row(i);
                self.predict(&x) as f64 == x[self.label]
            })
            .count();
        hits as f64 / test.num_samples() as f64
    }
}

/// Synthetic labelled data: the label is a discrete dimension of a random
/// hybrid model whose components favour different labels.
pub fn labelled_model<R: Rng>(rng: &mut R, features: usize, classes: usize, rank: usize) -> JointModel {
    let mut parts = Vec::new();
    for _ in 0..features {
        let basis = random_continuous_dim(rng, 8, 16);
        let w = stochastic(rng, basis.num_atoms(), rank);
        parts.push((basis, w));
    }
    let basis = discrete_dim(classes);
    let mut w = DMatrix::from_element(classes, rank, 0.02 / (classes - 1).max(1) as f64);
    for r in 0..rank {
        w[(r % classes, r)] = 0.98;
    }
    if classes == 1 {
        w.fill(1.0);
    }
    parts.push((basis, w));
    JointModel::new(parts, DVector::from_vec(simplex_vec(rng, rank))).unwrap()
}

pub fn columns_for(model: &JointModel) -> Vec<ColumnMeta> {
    model
        .factors()
        .iter()
        .enumerate()
        .map(|(n, f)| {
            if f.is_discrete() {
                ColumnMeta::discrete(format!("x{n}"), f.grid().num_bins())
            } else {
                ColumnMeta::continuous(format!("x{n}"))
            }
        })
        .collect()
}

/// Random pairwise problem: stochastic bases of shape `bins × atoms[n]` and
/// random joint pmfs as targets.
pub fn random_problem<R: Rng>(rng: &mut R, atoms: &[usize], bins: usize) -> jupad::solver::PairwiseProblem {
    let bases: Vec<DMatrix<f64>> = atoms.iter().map(|&l| stochastic(rng, bins, l)).collect();
    let mut targets = BTreeMap::new();
    for j in 0..atoms.len() {
        for k in j + 1..atoms.len() {
            targets.insert((j, k), joint_pmf(rng, bins, bins));
        }
    }
    jupad::solver::PairwiseProblem::new(bases, targets).unwrap()
}

/// Largest entrywise difference relative to the largest entry of `exact`.
pub fn rel_err(approx: &[f64], exact: &[f64]) -> f64 {
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    approx
        .iter()
        .zip(exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}
