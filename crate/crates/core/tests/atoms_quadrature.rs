mod common;

use approx::assert_abs_diff_eq;
use common::{kinks, piecewise_simpson, random_atom, rng};
use jupad::atoms::{discretize, AtomSpec, Dictionary, Grid};

#[test]
fn pdf_integrates_to_one() {
    let mut r = rng(10);
    for _ in 0..30 {
        let atom = random_atom(&mut r);
        let (lo, hi) = (atom.quantile(1e-12) - 1.0, atom.quantile(1.0 - 1e-12) + 1.0);
        let total = piecewise_simpson(|x| atom.pdf_at(x).unwrap(), lo, hi, &kinks(&atom), 4000);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }
}

#[test]
fn standard_normal_peak_matches_quadrature_of_cdf_slope() {
    let g = AtomSpec::Gaussian { mean: 0.0, variance: 1.0 };
    let h = 1e-5;
    let slope = g.interval_mass(-h, h).unwrap() / (2.0 * h);
    assert_abs_diff_eq!(g.pdf_at(0.0).unwrap(), slope, epsilon = 1e-10);
    assert_abs_diff_eq!(g.pdf_at(0.0).unwrap(), 0.398_94, epsilon = 1e-5);
}

#[test]
fn laplace_unit_interval_by_quadrature() {
    let l = AtomSpec::Laplacian { mean: 0.0, scale: 1.0 };
    let q = piecewise_simpson(|x| l.pdf_at(x).unwrap(), 0.0, 1.0, &[], 2000);
    assert_abs_diff_eq!(l.interval_mass(0.0, 1.0).unwrap(), q, epsilon = 1e-12);
    assert_abs_diff_eq!(q, 0.316_06, epsilon = 1e-5);
}

#[test]
fn interval_mass_matches_quadrature() {
    let mut r = rng(11);
    for _ in 0..50 {
        let atom = random_atom(&mut r);
        let a = -5.0 + 10.0 * rand::Rng::random::<f64>(&mut r);
        let b = a + 3.0 * rand::Rng::random::<f64>(&mut r);
        let q = piecewise_simpson(|x| atom.pdf_at(x).unwrap(), a, b, &kinks(&atom), 2000);
        assert_abs_diff_eq!(atom.interval_mass(a, b).unwrap(), q, epsilon = 1e-10);
    }
}

#[test]
fn far_tail_mass_is_accurate() {
    // computed from the upper tail, not as 1 - cdf
    let g = AtomSpec::Gaussian { mean: 0.0, variance: 1.0 };
    let q = piecewise_simpson(|x| g.pdf_at(x).unwrap(), 9.0, 10.0, &[], 4000);
    let m = g.interval_mass(9.0, 10.0).unwrap();
    assert!((m - q).abs() / q < 1e-8, "{m} vs {q}");
}

#[test]
fn gaussian_column_on_coarse_grid() {
    let dict = Dictionary::from_atoms(vec![AtomSpec::Gaussian { mean: 0.0, variance: 1.0 }], 0.99).unwrap();
    let grid = Grid::continuous(vec![-4.0, -1.0, 1.0, 4.0]).unwrap();
    let d = discretize(&dict, &grid, 0.99).unwrap();
    let g = dict.atoms()[0];
    let pdf = |x: f64| g.pdf_at(x).unwrap();
    let masses: Vec<f64> = (0..3)
        .map(|i| {
            let (a, b) = grid.interval(i);
            piecewise_simpson(pdf, a, b, &[], 4000)
        })
        .collect();
    let covered: f64 = masses.iter().sum();
    assert_abs_diff_eq!(d.coverage()[0], covered, epsilon = 1e-12);
    assert_abs_diff_eq!(covered, 0.99994, epsilon = 1e-5);
    for i in 0..3 {
        assert_abs_diff_eq!(d.matrix()[(i, 0)], masses[i] / covered, epsilon = 1e-12);
    }
}

#[test]
fn discretized_columns_are_stochastic() {
    let mut r = rng(12);
    for _ in 0..10 {
        let d = common::random_continuous_dim(&mut r, 6, 12);
        for c in d.matrix().column_iter() {
            assert_abs_diff_eq!(c.sum(), 1.0, epsilon = 1e-12);
            assert!(c.iter().all(|&v| v >= 0.0));
        }
    }
}
