//! Samples, grids proposed from data, and empirical 1D/2D marginals.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::Grid;
use crate::error::{JupadError, Result};

/// Default number of equal-width bins for continuous dimensions.
pub const DEFAULT_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Discrete { num_states: usize },
}

/// Per-column metadata. `states` keeps the original labels of a discrete
/// column; `transform` the `(min, max)` of a column rescaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<(f64, f64)>,
}

impl ColumnMeta {
    pub fn continuous(name: impl Into<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Continuous,
            states: None,
            transform: None,
        }
    }

    pub fn discrete(name: impl Into<String>, num_states: usize) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Discrete { num_states },
            states: None,
            transform: None,
        }
    }
}

/// Sample matrix (rows are samples) with column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: DMatrix<f64>,
    columns: Vec<ColumnMeta>,
    label: Option<usize>,
}

impl Dataset {
    pub fn new(data: DMatrix<f64>, columns: Vec<ColumnMeta>, label: Option<usize>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(JupadError::Shape("a dataset needs at least one row".into()));
        }
        if data.ncols() != columns.len() {
            return Err(JupadError::Shape(format!(
                "{} columns of data but {} column descriptions",
                data.ncols(),
                columns.len()
            )));
        }
        for (c, meta) in columns.iter().enumerate() {
            match meta.kind {
                ColumnKind::Discrete { num_states } => {
                    if num_states == 0 {
                        return Err(JupadError::Config(format!("column {} has zero states", meta.name)));
                    }
                    for (row, &v) in data.column(c).iter().enumerate() {
                        if v.fract() != 0.0 || v < 0.0 || v >= num_states as f64 {
                            return Err(JupadError::Domain(format!(
                                "row {row}, column {}: {v} is not one of {num_states} states",
                                meta.name
                            )));
                        }
                    }
                }
                ColumnKind::Continuous => {
                    if let Some(row) = data.column(c).iter().position(|v| !v.is_finite()) {
                        return Err(JupadError::Domain(format!(
                            "row {row}, column {}: non-finite value",
                            meta.name
                        )));
                    }
                }
            }
        }
        if let Some(l) = label {
            match columns.get(l).map(|m| m.kind) {
                Some(ColumnKind::Discrete { .. }) => {}
                Some(ColumnKind::Continuous) => {
                    return Err(JupadError::Config(format!("label column {} must be discrete", columns[l].name)))
                }
                None => return Err(JupadError::DimensionOutOfRange { index: l, dims: columns.len() }),
            }
        }
        Ok(Dataset { data, columns, label })
    }

    /// Unlabelled dataset with every column continuous.
    pub fn continuous(data: DMatrix<f64>) -> Result<Self> {
        let columns = (0..data.ncols()).map(|c| ColumnMeta::continuous(format!("x{c}"))).collect();
        Dataset::new(data, columns, None)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn num_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_dims(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn with_label(mut self, label: Option<usize>) -> Result<Self> {
        self.label = None;
        Dataset::new(self.data, self.columns, label)
    }

    /// Rows `indices` in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(JupadError::Shape("row selection is empty".into()));
        }
        let data = DMatrix::from_fn(indices.len(), self.num_dims(), |i, j| self.data[(indices[i], j)]);
        Ok(Dataset {
            data,
            columns: self.columns.clone(),
            label: self.label,
        })
    }
}

/// Empirical joint distribution of the bins of dimensions `(j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseHistogram {
    pub pair: (usize, usize),
    pub counts: DMatrix<u64>,
    pub estimate: DMatrix<f64>,
    pub num_samples: usize,
}

pub fn propose_grid(dataset: &Dataset, n: usize, bins: usize) -> Result<Grid> {
    propose_grid_spanning(dataset, n, bins, None)
}

/// Like [`propose_grid`], but the continuous range is widened to include
/// `extra` as well (used to make room for dictionary atoms near the edges).
pub fn propose_grid_spanning(dataset: &Dataset, n: usize, bins: usize, extra: Option<(f64, f64)>) -> Result<Grid> {
    let meta = dataset.columns().get(n).ok_or(JupadError::DimensionOutOfRange {
        index: n,
        dims: dataset.num_dims(),
    })?;
    match meta.kind {
        ColumnKind::Discrete { num_states } => Grid::discrete(num_states),
        ColumnKind::Continuous => {
            if bins < 2 {
                return Err(JupadError::Config(format!("continuous column {} needs at least 2 bins", meta.name)));
            }
            let col = dataset.data().column(n);
            let mut low = col.min();
            let mut high = col.max();
            if low == high && extra.is_none() {
                return Err(JupadError::DegenerateColumn { column: n, value: low, bins });
            }
            if let Some((a, b)) = extra {
                low = low.min(a);
                high = high.max(b);
            }
            let pad = 1e-9 * (high - low).max(1.0);
            Grid::uniform(low - pad, high + pad, bins)
        }
    }
}

pub fn histogram_1d(dataset: &Dataset, grid: &Grid, n: usize) -> Result<DVector<f64>> {
    let mut counts = DVector::zeros(grid.num_bins());
    for (row, &v) in dataset.data().column(n).iter().enumerate() {
        let b = grid.bin_of(v).ok_or(JupadError::OutOfRange { row, column: n, value: v })?;
        counts[b] += 1.0;
    }
    Ok(counts.unscale(dataset.num_samples() as f64))
}

pub fn estimate_pairwise(dataset: &Dataset, grids: &[Grid], j: usize, k: usize) -> Result<PairwiseHistogram> {
    let dims = dataset.num_dims();
    if j == k || j >= dims || k >= dims {
        return Err(JupadError::InvalidPair { j, k });
    }
    if grids.len() != dims {
        return Err(JupadError::Shape(format!("{} grids for {dims} dimensions", grids.len())));
    }
    let (gj, gk) = (&grids[j], &grids[k]);
    let mut counts = DMatrix::<u64>::zeros(gj.num_bins(), gk.num_bins());
    let data = dataset.data();
    for row in 0..dataset.num_samples() {
        let (xj, xk) = (data[(row, j)], data[(row, k)]);
        let bj = gj.bin_of(xj).ok_or(JupadError::OutOfRange { row, column: j, value: xj })?;
        let bk = gk.bin_of(xk).ok_or(JupadError::OutOfRange { row, column: k, value: xk })?;
        counts[(bj, bk)] += 1;
    }
    let total = dataset.num_samples() as f64;
    let estimate = counts.map(|c| c as f64 / total);
    Ok(PairwiseHistogram {
        pair: (j, k),
        counts,
        estimate,
        num_samples: dataset.num_samples(),
    })
}

/// Every pair `j < k`, keyed by the pair.
pub fn estimate_all_pairs(dataset: &Dataset, grids: &[Grid]) -> Result<BTreeMap<(usize, usize), PairwiseHistogram>> {
    let n = dataset.num_dims();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j + 1..n).map(move |k| (j, k))).collect();
    #[cfg(feature = "parallel")]
    let iter = pairs.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = pairs.iter();
    let hists: Vec<PairwiseHistogram> = iter
        .map(|&(j, k)| estimate_pairwise(dataset, grids, j, k))
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().zip(hists).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_over_unit_interval() {
        let ds = Dataset::continuous(DMatrix::from_column_slice(3, 1, &[0.0, 0.3, 1.0])).unwrap();
        let g = propose_grid(&ds, 0, 2).unwrap();
        assert_eq!(g.num_bins(), 2);
        assert_abs_diff_eq!(g.edges()[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g.edges()[1], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(g.edges()[2], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn discrete_column_gets_state_bins() {
        let ds = Dataset::new(
            DMatrix::from_column_slice(2, 1, &[0.0, 3.0]),
            vec![ColumnMeta::discrete("y", 4)],
            Some(0),
        )
        .unwrap();
        assert_eq!(propose_grid(&ds, 0, 16).unwrap().num_bins(), 4);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let ds = Dataset::continuous(DMatrix::from_element(5, 1, 2.0)).unwrap();
        assert!(matches!(
            propose_grid(&ds, 0, 4),
            Err(JupadError::DegenerateColumn { column: 0, .. })
        ));
    }

    #[test]
    fn single_sample_histogram() {
        let ds = Dataset::continuous(DMatrix::from_row_slice(1, 2, &[0.5, 0.5])).unwrap();
        let g = Grid::uniform(0.0, 1.0, 4).unwrap();
        let h = estimate_pairwise(&ds, &[g.clone(), g], 0, 1).unwrap();
        assert_eq!(h.estimate.sum(), 1.0);
        assert_eq!(h.estimate[(2, 2)], 1.0);
        assert_eq!(h.estimate.iter().filter(|&&v| v == 0.0).count(), 15);
    }

    #[test]
    fn out_of_range_sample() {
        let ds = Dataset::continuous(DMatrix::from_row_slice(1, 2, &[0.5, 1.5])).unwrap();
        let g = Grid::uniform(0.0, 1.0, 4).unwrap();
        assert!(matches!(
            estimate_pairwise(&ds, &[g.clone(), g], 0, 1),
            Err(JupadError::OutOfRange { column: 1, .. })
        ));
    }

    #[test]
    fn pair_counts() {
        for n in [3usize, 5] {
            let data = DMatrix::from_fn(20, n, |i, j| ((i * 7 + j * 3) % 11) as f64);
            let ds = Dataset::continuous(data).unwrap();
            let grids: Vec<Grid> = (0..n).map(|c| propose_grid(&ds, c, 4).unwrap()).collect();
            let all = estimate_all_pairs(&ds, &grids).unwrap();
            assert_eq!(all.len(), n * (n - 1) / 2);
        }
    }
}
