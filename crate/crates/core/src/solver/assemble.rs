use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::stage1::PairCoupling;
use crate::error::{JupadError, Result};

/// How dimensions are divided between the row and column side of `T̃`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitPolicy {
    /// Even 0-based positions on the row side, odd on the column side, then
    /// rebalanced until both sides hold at least `F` atoms.
    #[default]
    Alternating,
    Explicit { rows: Vec<usize>, cols: Vec<usize> },
}

/// A contiguous block of rows (or columns) of `T̃` belonging to one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimBlock {
    pub dim: usize,
    pub offset: usize,
    pub len: usize,
}

/// Block matrix whose `(a, b)` block is `T_{row_a, col_b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledMatrix {
    pub matrix: DMatrix<f64>,
    pub row_blocks: Vec<DimBlock>,
    pub col_blocks: Vec<DimBlock>,
}

impl AssembledMatrix {
    pub fn row_dims(&self) -> Vec<usize> {
        self.row_blocks.iter().map(|b| b.dim).collect()
    }

    pub fn col_dims(&self) -> Vec<usize> {
        self.col_blocks.iter().map(|b| b.dim).collect()
    }
}

fn side_atoms(side: &[usize], atom_counts: &[usize]) -> usize {
    side.iter().map(|&d| atom_counts[d]).sum()
}

/// Resolves the split policy into `(rows, cols)` index sets.
pub fn resolve_split(policy: &SplitPolicy, atom_counts: &[usize], rank: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = atom_counts.len();
    if n < 2 {
        return Err(JupadError::InfeasibleSplit("at least two dimensions are required".into()));
    }
    let (rows, cols) = match policy {
        SplitPolicy::Explicit { rows, cols } => {
            let mut seen = vec![false; n];
            for &d in rows.iter().chain(cols) {
                if d >= n || seen[d] {
                    return Err(JupadError::Config(format!(
                        "explicit split must partition dimensions 0..{n}; offending index {d}"
                    )));
                }
                seen[d] = true;
            }
            if seen.iter().any(|s| !s) || rows.is_empty() || cols.is_empty() {
                return Err(JupadError::Config(format!(
                    "explicit split must partition dimensions 0..{n} into two non-empty sets"
                )));
            }
            (rows.clone(), cols.clone())
        }
        SplitPolicy::Alternating => {
            let mut rows: Vec<usize> = (0..n).step_by(2).collect();
            let mut cols: Vec<usize> = (1..n).step_by(2).collect();
            rebalance(&mut rows, &mut cols, atom_counts, rank);
            rebalance(&mut cols, &mut rows, atom_counts, rank);
            rows.sort_unstable();
            cols.sort_unstable();
            (rows, cols)
        }
    };
    let (ra, ca) = (side_atoms(&rows, atom_counts), side_atoms(&cols, atom_counts));
    if ra < rank || ca < rank {
        return Err(JupadError::InfeasibleSplit(format!(
            "rank {rank} needs at least {rank} atoms on each side, got {ra} (dims {rows:?}) and {ca} (dims {cols:?})"
        )));
    }
    Ok((rows, cols))
}

/// Moves dimensions from `donor` to `short` while `short` lacks atoms and
/// the donor can spare them.
fn rebalance(short: &mut Vec<usize>, donor: &mut Vec<usize>, atom_counts: &[usize], rank: usize) {
    while side_atoms(short, atom_counts) < rank && donor.len() > 1 {
        let donor_total = side_atoms(donor, atom_counts);
        let need = rank - side_atoms(short, atom_counts);
        // smallest dimension that closes the gap without starving the donor,
        // otherwise the largest one the donor can spare
        let spare: Vec<(usize, usize)> = donor
            .iter()
            .enumerate()
            .filter(|(_, &d)| donor_total - atom_counts[d] >= rank)
            .map(|(pos, &d)| (pos, atom_counts[d]))
            .collect();
        let pick = spare
            .iter()
            .filter(|(_, l)| *l >= need)
            .min_by_key(|(pos, l)| (*l, *pos))
            .or_else(|| spare.iter().max_by_key(|(pos, l)| (*l, std::cmp::Reverse(*pos))));
        let Some(&(pos, _)) = pick else { return };
        short.push(donor.remove(pos));
    }
}

/// Concatenates the pair couplings into `T̃`. Couplings are stored once with
/// `j < k`; the `(k, j)` view is the transpose.
pub fn assemble_ttilde(
    couplings: &BTreeMap<(usize, usize), PairCoupling>,
    rows: &[usize],
    cols: &[usize],
    atom_counts: &[usize],
) -> Result<AssembledMatrix> {
    let block_list = |side: &[usize]| {
        let mut offset = 0;
        side.iter()
            .map(|&dim| {
                let b = DimBlock {
                    dim,
                    offset,
                    len: atom_counts[dim],
                };
                offset += b.len;
                b
            })
            .collect::<Vec<_>>()
    };
    let row_blocks = block_list(rows);
    let col_blocks = block_list(cols);
    let total_rows = side_atoms(rows, atom_counts);
    let total_cols = side_atoms(cols, atom_counts);
    let mut matrix = DMatrix::zeros(total_rows, total_cols);
    for rb in &row_blocks {
        for cb in &col_blocks {
            let (j, k) = (rb.dim, cb.dim);
            let key = (j.min(k), j.max(k));
            let coupling = couplings
                .get(&key)
                .ok_or_else(|| JupadError::Shape(format!("missing coupling for pair {key:?}")))?;
            let block = if j < k {
                coupling.matrix.clone()
            } else {
                coupling.matrix.transpose()
            };
            if block.nrows() != rb.len || block.ncols() != cb.len {
                return Err(JupadError::Shape(format!(
                    "coupling {key:?} is {}x{}, expected {}x{}",
                    block.nrows(),
                    block.ncols(),
                    rb.len,
                    cb.len
                )));
            }
            matrix.view_mut((rb.offset, cb.offset), (rb.len, cb.len)).copy_from(&block);
        }
    }
    Ok(AssembledMatrix {
        matrix,
        row_blocks,
        col_blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coupling(pair: (usize, usize), rows: usize, cols: usize, fill: f64) -> PairCoupling {
        PairCoupling {
            pair,
            matrix: DMatrix::from_fn(rows, cols, |i, j| fill + (i * cols + j) as f64),
        }
    }

    #[test]
    fn two_dims_is_the_single_coupling() {
        let mut c = BTreeMap::new();
        c.insert((0, 1), coupling((0, 1), 3, 4, 0.0));
        let (rows, cols) = resolve_split(&SplitPolicy::Alternating, &[3, 4], 2).unwrap();
        assert_eq!((rows.clone(), cols.clone()), (vec![0], vec![1]));
        let a = assemble_ttilde(&c, &rows, &cols, &[3, 4]).unwrap();
        assert_eq!(a.matrix, c[&(0, 1)].matrix);
    }

    #[test]
    fn four_dims_block_layout() {
        let counts = [2, 2, 2, 2];
        let mut c = BTreeMap::new();
        for j in 0..4 {
            for k in j + 1..4 {
                c.insert((j, k), coupling((j, k), 2, 2, (10 * j + k) as f64 * 100.0));
            }
        }
        let a = assemble_ttilde(&c, &[0, 1], &[2, 3], &counts).unwrap();
        assert_eq!(a.matrix.view((0, 0), (2, 2)), c[&(0, 2)].matrix);
        assert_eq!(a.matrix.view((0, 2), (2, 2)), c[&(0, 3)].matrix);
        assert_eq!(a.matrix.view((2, 0), (2, 2)), c[&(1, 2)].matrix);
        assert_eq!(a.matrix.view((2, 2), (2, 2)), c[&(1, 3)].matrix);
        // reversed orientation uses transposes
        let b = assemble_ttilde(&c, &[2, 3], &[0, 1], &counts).unwrap();
        assert_eq!(b.matrix, a.matrix.transpose());
    }

    #[test]
    fn infeasible_split() {
        let r = resolve_split(&SplitPolicy::Alternating, &[2, 2], 3);
        assert!(matches!(r, Err(JupadError::InfeasibleSplit(_))));
    }

    #[test]
    fn rebalancing_moves_dimensions() {
        // alternating gives rows {0, 2} (2 + 2 atoms) and cols {1, 3} (10 + 10)
        let (rows, cols) = resolve_split(&SplitPolicy::Alternating, &[2, 10, 2, 10], 6).unwrap();
        assert!(side_atoms(&rows, &[2, 10, 2, 10]) >= 6);
        assert!(side_atoms(&cols, &[2, 10, 2, 10]) >= 6);
    }

    #[test]
    fn explicit_split_validated() {
        let bad = SplitPolicy::Explicit { rows: vec![0], cols: vec![0, 1] };
        assert!(resolve_split(&bad, &[3, 3], 1).is_err());
        let ok = SplitPolicy::Explicit { rows: vec![1], cols: vec![0] };
        assert_eq!(resolve_split(&ok, &[3, 3], 1).unwrap(), (vec![1], vec![0]));
    }
}
