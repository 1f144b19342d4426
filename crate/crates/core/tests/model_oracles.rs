mod common;

use approx::assert_abs_diff_eq;
use common::*;
use jupad::atoms::{discretize, AtomSpec, Dictionary, Grid};
use jupad::model::{JointModel, Marginal1d};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn pdf_matches_brute_force() {
    let mut r = rng(20);
    for _ in 0..10 {
        let m = random_model(&mut r, &[None, None, Some(4)], 3, 5, 10);
        for _ in 0..20 {
            let x = [
                -4.0 + 8.0 * r.random::<f64>(),
                -4.0 + 8.0 * r.random::<f64>(),
                r.random_range(0..4) as f64,
            ];
            let a = m.pdf_eval(&x).unwrap();
            let b = brute_pdf(&m, &x);
            assert!((a - b).abs() <= 1e-13 * b.max(1e-300) + 1e-300, "{a} vs {b}");
        }
    }
}

#[test]
fn pairwise_marginal_matches_tensor_marginalization() {
    let mut r = rng(21);
    for _ in 0..10 {
        let m = random_model(&mut r, &[None, None, None], 3, 4, 8);
        let (shape, tensor) = full_tensor(&m);
        for (j, k) in [(0, 1), (0, 2), (1, 2)] {
            let brute = marginalize(&shape, &tensor, j, k);
            let fast = m.pairwise_marginal(j, k).unwrap();
            assert!((brute - fast).amax() < 1e-10);
        }
    }
}

#[test]
fn continuous_marginal_integrates_to_one() {
    let mut r = rng(22);
    let m = random_model(&mut r, &[None, Some(3)], 2, 5, 10);
    let Marginal1d::Continuous { dictionary, .. } = m.marginal_1d(0).unwrap() else {
        panic!("expected a continuous marginal")
    };
    let marginal = m.marginal_1d(0).unwrap();
    let breaks: Vec<f64> = dictionary.atoms().iter().flat_map(kinks).collect();
    let (lo, hi) = dictionary.support_hull(1.0 - 1e-13);
    let q = piecewise_simpson(|x| marginal.density(x), lo - 1.0, hi + 1.0, &breaks, 4000);
    assert_abs_diff_eq!(q, 1.0, epsilon = 1e-6);
    let Marginal1d::Discrete { pmf } = m.marginal_1d(1).unwrap() else {
        panic!("expected a discrete marginal")
    };
    assert_abs_diff_eq!(pmf.sum(), 1.0, epsilon = 1e-9);
}

#[test]
fn continuous_marginal_equals_integrated_joint() {
    // integrate the second coordinate out of the joint by quadrature
    let mut r = rng(23);
    let m = random_model(&mut r, &[None, None], 2, 3, 10);
    let marginal = m.marginal_1d(0).unwrap();
    let dict1 = m.factors()[1].dictionary().clone();
    let breaks: Vec<f64> = dict1.atoms().iter().flat_map(kinks).collect();
    let (lo, hi) = dict1.support_hull(1.0 - 1e-13);
    for x in [-1.3, 0.0, 0.7, 2.2] {
        let q = piecewise_simpson(|y| m.pdf_eval(&[x, y]).unwrap(), lo - 1.0, hi + 1.0, &breaks, 3000);
        assert_abs_diff_eq!(q, marginal.density(x), epsilon = 1e-8);
    }
}

fn two_atom_1d() -> JointModel {
    let dict = Dictionary::from_atoms(
        vec![
            AtomSpec::Gaussian { mean: -1.0, variance: 0.5 },
            AtomSpec::Laplacian { mean: 2.0, scale: 0.7 },
        ],
        0.999,
    )
    .unwrap();
    let (lo, hi) = dict.support_hull(0.999);
    let d = discretize(&dict, &Grid::uniform(lo, hi, 20).unwrap(), 0.99).unwrap();
    JointModel::new(vec![(d, DMatrix::from_row_slice(2, 1, &[0.35, 0.65]))], DVector::from_vec(vec![1.0])).unwrap()
}

/// Bin probabilities of a continuous marginal on `edges`, plus the two tails,
/// computed from the atom distribution functions.
fn bin_probabilities(model: &JointModel, n: usize, edges: &[f64]) -> Vec<f64> {
    let f = &model.factors()[n];
    let w = f.weights() * model.mixture();
    let cdf = |x: f64| -> f64 { f.dictionary().atoms().iter().zip(w.iter()).map(|(a, wl)| wl * a.cdf(x)).sum() };
    let mut p = vec![cdf(edges[0])];
    for e in edges.windows(2) {
        p.push(cdf(e[1]) - cdf(e[0]));
    }
    p.push(1.0 - cdf(edges[edges.len() - 1]));
    p
}

fn bin_counts(values: impl Iterator<Item = f64>, edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; edges.len() + 1];
    for v in values {
        let i = edges.partition_point(|&e| e <= v);
        counts[i] += 1.0;
    }
    counts
}

#[test]
fn one_dimensional_sampling_chi_square() {
    let m = two_atom_1d();
    let s = m.sample(100_000, 77).unwrap();
    let edges = m.factors()[0].grid().edges().to_vec();
    let p = bin_probabilities(&m, 0, &edges);
    let obs = bin_counts(s.column(0).iter().copied(), &edges);
    let pval = chi_square_p(&obs, &p);
    assert!(pval > 0.01, "p = {pval}");
}

#[test]
fn sampling_edge_cases() {
    // a single indicator atom
    let d = discrete_dim(1);
    let m = JointModel::new(vec![(d, DMatrix::from_element(1, 1, 1.0))], DVector::from_vec(vec![1.0])).unwrap();
    assert!(m.sample(100, 1).unwrap().iter().all(|&v| v == 0.0));
    // second component has zero weight: its state never appears
    let d = discrete_dim(2);
    let m = JointModel::new(vec![(d, DMatrix::identity(2, 2))], DVector::from_vec(vec![1.0, 0.0])).unwrap();
    assert!(m.sample(1000, 2).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn map_with_label_independent_of_features() {
    let mut r = rng(24);
    let feature = random_continuous_dim(&mut r, 3, 8);
    let label = discrete_dim(3);
    let wf = stochastic(&mut r, 3, 1);
    let wl = DMatrix::from_row_slice(3, 1, &[0.2, 0.5, 0.3]);
    let m = JointModel::new(vec![(feature, wf), (label, wl)], DVector::from_vec(vec![1.0])).unwrap();
    for x in [-1.0, 0.0, 1.5] {
        assert_eq!(m.map_classify(1, &[x, 0.0]).unwrap().0, 1);
    }
}

#[test]
fn map_recovers_component_labels() {
    let dict = Dictionary::from_atoms(
        vec![
            AtomSpec::Uniform { low: 0.0, high: 1.0 },
            AtomSpec::Uniform { low: 2.0, high: 3.0 },
        ],
        0.999,
    )
    .unwrap();
    let feature = discretize(&dict, &Grid::uniform(0.0, 3.0, 6).unwrap(), 0.99).unwrap();
    let m = JointModel::new(
        vec![(feature, DMatrix::identity(2, 2)), (discrete_dim(2), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))],
        DVector::from_vec(vec![0.5, 0.5]),
    )
    .unwrap();
    let samples = m.sample(500, 3).unwrap();
    for row in samples.row_iter() {
        let x = [row[0], row[1]];
        let (y, post) = m.map_classify(1, &x).unwrap();
        assert_eq!(y as f64, x[1]);
        assert_abs_diff_eq!(post.sum(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn posterior_sums_to_one() {
    let mut r = rng(25);
    let m = random_model(&mut r, &[None, None, Some(3)], 3, 4, 8);
    for _ in 0..50 {
        let x = [-3.0 + 6.0 * r.random::<f64>(), -3.0 + 6.0 * r.random::<f64>(), 0.0];
        if let Ok((_, post)) = m.map_classify(2, &x) {
            assert_abs_diff_eq!(post.sum(), 1.0, epsilon = 1e-12);
        }
    }
}
