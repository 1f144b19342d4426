//! JSON model file.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::atoms::{discretize, AtomSpec, Dictionary, Domain, Grid};
use crate::error::{JupadError, Result};
use crate::histogram::{ColumnKind, ColumnMeta};
use crate::model::JointModel;

pub const MODEL_FORMAT: &str = "jupad-model";
pub const MODEL_VERSION: u32 = 1;
/// Simplex tolerance applied when loading.
pub const LOAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: Option<u64>,
    /// SHA-256 of the configuration that produced the model.
    pub config_hash: Option<String>,
    pub producer: String,
}

impl Provenance {
    pub fn new(seed: Option<u64>, config_hash: Option<String>) -> Self {
        Provenance {
            seed,
            config_hash,
            producer: format!("jupad {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

/// A model together with the metadata needed to apply it to raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: JointModel,
    pub columns: Vec<ColumnMeta>,
    pub label: Option<usize>,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightMatrix {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimensionRecord {
    column: ColumnMeta,
    domain: Domain,
    grid_edges: Vec<f64>,
    atoms: Vec<AtomSpec>,
    weights: WeightMatrix,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    num_dims: usize,
    rank: usize,
    label: Option<usize>,
    mixture: Vec<f64>,
    dimensions: Vec<DimensionRecord>,
    provenance: Provenance,
}

fn corrupt(msg: impl Into<String>) -> JupadError {
    JupadError::CorruptModel(msg.into())
}

pub fn model_to_string(saved: &SavedModel) -> Result<String> {
    let model = &saved.model;
    if saved.columns.len() != model.num_dims() {
        return Err(JupadError::Shape(format!(
            "{} column descriptions for a {}-dimensional model",
            saved.columns.len(),
            model.num_dims()
        )));
    }
    let dimensions = model
        .factors()
        .iter()
        .zip(&saved.columns)
        .map(|(f, column)| {
            let w = f.weights();
            DimensionRecord {
                column: column.clone(),
                domain: f.dictionary().domain(),
                grid_edges: f.grid().edges().to_vec(),
                atoms: f.dictionary().atoms().to_vec(),
                weights: WeightMatrix {
                    rows: w.nrows(),
                    cols: w.ncols(),
                    data: (0..w.nrows()).flat_map(|i| w.row(i).iter().copied().collect::<Vec<_>>()).collect(),
                },
            }
        })
        .collect();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        num_dims: model.num_dims(),
        rank: model.rank(),
        label: saved.label,
        mixture: model.mixture().iter().copied().collect(),
        dimensions,
        provenance: saved.provenance.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).map_err(|e| JupadError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_str(text: &str) -> Result<SavedModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(corrupt(format!("unknown format {:?}", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(corrupt(format!(
            "format version {} is not supported (expected {MODEL_VERSION})",
            file.version
        )));
    }
    if file.dimensions.len() != file.num_dims || file.mixture.len() != file.rank {
        return Err(corrupt("dimension or rank count does not match the stored data"));
    }
    let mut parts = Vec::with_capacity(file.num_dims);
    let mut columns = Vec::with_capacity(file.num_dims);
    for (n, dim) in file.dimensions.into_iter().enumerate() {
        let w = &dim.weights;
        if w.rows != dim.atoms.len() || w.cols != file.rank || w.data.len() != w.rows * w.cols {
            return Err(corrupt(format!("weights of dimension {n} have the wrong shape")));
        }
        let dict = Dictionary::new(dim.atoms, dim.domain).map_err(|e| corrupt(format!("dimension {n}: {e}")))?;
        let grid = match dim.domain {
            Domain::Discrete { num_states } => {
                let grid = Grid::discrete(num_states).map_err(|e| corrupt(e.to_string()))?;
                if grid.edges() != dim.grid_edges.as_slice() {
                    return Err(corrupt(format!("dimension {n}: grid does not match its states")));
                }
                grid
            }
            Domain::Continuous { .. } => Grid::continuous(dim.grid_edges).map_err(|e| corrupt(format!("dimension {n}: {e}")))?,
        };
        let consistent = match (dim.column.kind, dim.domain) {
            (ColumnKind::Discrete { num_states: a }, Domain::Discrete { num_states: b }) => a == b,
            (ColumnKind::Continuous, Domain::Continuous { .. }) => true,
            _ => false,
        };
        if !consistent {
            return Err(corrupt(format!("dimension {n}: column kind disagrees with the domain")));
        }
        let basis = discretize(&dict, &grid, 0.0).map_err(|e| corrupt(format!("dimension {n}: {e}")))?;
        let weights = DMatrix::from_row_slice(w.rows, w.cols, &w.data);
        parts.push((basis, weights));
        columns.push(dim.column);
    }
    let model = JointModel::from_stored(parts, DVector::from_vec(file.mixture), LOAD_TOLERANCE)
        .map_err(|e| corrupt(e.to_string()))?;
    if let Some(l) = file.label {
        if !matches!(columns.get(l).map(|c| c.kind), Some(ColumnKind::Discrete { .. })) {
            return Err(corrupt("label does not refer to a discrete dimension"));
        }
    }
    Ok(SavedModel {
        model,
        columns,
        label: file.label,
        provenance: file.provenance,
    })
}

pub fn save_model(path: impl AsRef<Path>, saved: &SavedModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(saved)?).map_err(|e| JupadError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| JupadError::io(path, e))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::Dictionary;

    fn small() -> SavedModel {
        let dict = Dictionary::from_atoms(
            vec![
                AtomSpec::Gaussian { mean: 0.0, variance: 1.0 },
                AtomSpec::Laplacian { mean: 1.0, scale: 0.5 },
            ],
            0.999,
        )
        .unwrap();
        let grid = Grid::uniform(-4.0, 5.0, 9).unwrap();
        let basis = discretize(&dict, &grid, 0.99).unwrap();
        let id = Dictionary::identity(2).unwrap();
        let basis2 = discretize(&id, &Grid::discrete(2).unwrap(), 1.0).unwrap();
        let model = JointModel::new(
            vec![
                (basis, DMatrix::from_row_slice(2, 1, &[0.3, 0.7])),
                (basis2, DMatrix::from_row_slice(2, 1, &[1.0 / 3.0, 2.0 / 3.0])),
            ],
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        SavedModel {
            model,
            columns: vec![ColumnMeta::continuous("x"), ColumnMeta::discrete("y", 2)],
            label: Some(1),
            provenance: Provenance::new(Some(7), None),
        }
    }

    #[test]
    fn rank_one_round_trip_is_exact() {
        let saved = small();
        let back = model_from_str(&model_to_string(&saved).unwrap()).unwrap();
        assert_eq!(back, saved);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let text = model_to_string(&small()).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(model_from_str(cut), Err(JupadError::CorruptModel(_))));
    }

    #[test]
    fn version_mismatch_is_corrupt() {
        let text = model_to_string(&small()).unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(model_from_str(&text), Err(JupadError::CorruptModel(_))));
    }

    #[test]
    fn non_simplex_column_is_corrupt() {
        let text = model_to_string(&small()).unwrap().replace("0.7", "0.8");
        assert!(matches!(model_from_str(&text), Err(JupadError::CorruptModel(_))));
    }
}
