//! CSV ingestion and the numeric CSV writers.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{JupadError, Result};
use crate::eval::ClassificationScore;
use crate::histogram::{ColumnKind, ColumnMeta, Dataset};
use crate::solver::TraceRecord;
use crate::synth::ExperimentRow;

/// How a CSV column is to be read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default)]
    pub kind: ColumnType,
    /// Declared state labels of a discrete column, in index order. When
    /// omitted the distinct values found are used, sorted.
    #[serde(default)]
    pub states: Option<Vec<String>>,
    /// Rescale a continuous column to `[0, 1]` using its observed range.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    #[default]
    Continuous,
    Discrete,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnType::Continuous,
            states: None,
            normalize: false,
        }
    }

    pub fn discrete(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnType::Discrete,
            states: None,
            normalize: false,
        }
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| JupadError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(JupadError::Parse {
            row: 0,
            column: String::new(),
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != header.len() {
            return Err(JupadError::Parse {
                row: i + 1,
                column: String::new(),
                message: format!("{} fields, header has {}", record.len(), header.len()),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(JupadError::Parse {
            row: 1,
            column: String::new(),
            message: "no data rows".into(),
        });
    }
    Ok(RawTable { header, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> JupadError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => JupadError::io(path, io),
        other => JupadError::Parse {
            row,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

fn column_index(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| JupadError::Config(format!("column {name:?} not found in the header")))
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| JupadError::Parse {
        row,
        column: column.to_string(),
        message: format!("{cell:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(JupadError::Parse {
            row,
            column: column.to_string(),
            message: format!("{cell:?} is not finite"),
        });
    }
    Ok(v)
}

/// Distinct labels, sorted numerically when they all parse as numbers.
fn infer_states<'a>(cells: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = cells.collect();
    let mut states: Vec<String> = set.into_iter().map(str::to_string).collect();
    let numeric: Option<Vec<f64>> = states.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(states).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        states = paired.into_iter().map(|(_, s)| s).collect();
    }
    states
}

fn map_states(table: &RawTable, col: usize, states: &[String]) -> Result<Vec<f64>> {
    let index: HashMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            index.get(row[col].as_str()).map(|&i| i as f64).ok_or_else(|| {
                JupadError::Domain(format!(
                    "row {}, column {}: {:?} is not a declared state",
                    r + 1,
                    table.header[col],
                    row[col]
                ))
            })
        })
        .collect()
}

fn parse_column(table: &RawTable, col: usize) -> Result<Vec<f64>> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| parse_number(&row[col], r + 1, &table.header[col]))
        .collect()
}

fn assemble(columns: Vec<Vec<f64>>, metas: Vec<ColumnMeta>, label: Option<&str>) -> Result<Dataset> {
    let rows = columns[0].len();
    let data = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let label = match label {
        Some(name) => Some(
            metas
                .iter()
                .position(|m| m.name == name)
                .ok_or_else(|| JupadError::Config(format!("label column {name:?} is not among the selected columns")))?,
        ),
        None => None,
    };
    Dataset::new(data, metas, label)
}

/// Reads a CSV with a header row. With an empty `specs` every column is read
/// as continuous except the label; otherwise only the listed columns, in the listed order.
/// Discrete columns become 0-based state indices and keep their labels in
/// the column metadata, normalized columns keep their `(min, max)`.
pub fn load_csv(path: impl AsRef<Path>, specs: &[ColumnSpec], label: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_raw(path)?;
    let specs: Vec<ColumnSpec> = if specs.is_empty() {
        table
            .header
            .iter()
            .map(|h| {
                if Some(h.as_str()) == label {
                    ColumnSpec::discrete(h)
                } else {
                    ColumnSpec::continuous(h)
                }
            })
            .collect()
    } else {
        specs.to_vec()
    };
    let mut columns = Vec::with_capacity(specs.len());
    let mut metas = Vec::with_capacity(specs.len());
    for spec in &specs {
        let col = column_index(&table.header, &spec.name)?;
        match spec.kind {
            ColumnType::Discrete => {
                if spec.normalize {
                    return Err(JupadError::Config(format!("discrete column {:?} cannot be normalized", spec.name)));
                }
                let states = match &spec.states {
                    Some(s) if s.is_empty() => {
                        return Err(JupadError::Config(format!("column {:?} declares no states", spec.name)))
                    }
                    Some(s) => s.clone(),
                    None => infer_states(table.rows.iter().map(|r| r[col].as_str())),
                };
                columns.push(map_states(&table, col, &states)?);
                let mut meta = ColumnMeta::discrete(spec.name.clone(), states.len());
                meta.states = Some(states);
                metas.push(meta);
            }
            ColumnType::Continuous => {
                if spec.states.is_some() {
                    return Err(JupadError::Config(format!("continuous column {:?} cannot declare states", spec.name)));
                }
                let mut values = parse_column(&table, col)?;
                let mut meta = ColumnMeta::continuous(spec.name.clone());
                if spec.normalize {
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if !(hi > lo) {
                        return Err(JupadError::DegenerateColumn {
                            column: metas.len(),
                            value: lo,
                            bins: 0,
                        });
                    }
                    apply_transform(&mut values, (lo, hi));
                    meta.transform = Some((lo, hi));
                }
                columns.push(values);
                metas.push(meta);
            }
        }
    }
    assemble(columns, metas, label)
}

fn apply_transform(values: &mut [f64], (lo, hi): (f64, f64)) {
    for v in values {
        *v = (*v - lo) / (hi - lo);
    }
}

/// Reads a CSV using metadata stored with a model: columns are located by
/// name, states mapped with the stored labels and stored transforms applied.
pub fn load_csv_with_meta(path: impl AsRef<Path>, metas: &[ColumnMeta], label: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_raw(path)?;
    let mut columns = Vec::with_capacity(metas.len());
    for meta in metas {
        let col = column_index(&table.header, &meta.name)?;
        let values = match (meta.kind, &meta.states) {
            (ColumnKind::Discrete { .. }, Some(states)) => map_states(&table, col, states)?,
            (ColumnKind::Discrete { num_states }, None) => {
                let states: Vec<String> = (0..num_states).map(|s| s.to_string()).collect();
                map_states(&table, col, &states)?
            }
            (ColumnKind::Continuous, _) => {
                let mut v = parse_column(&table, col)?;
                if let Some(t) = meta.transform {
                    apply_transform(&mut v, t);
                }
                v
            }
        };
        columns.push(values);
    }
    let rows = columns[0].len();
    let data = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    Dataset::new(data, metas.to_vec(), label)
}

/// Column names from the header row.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    Ok(read_raw(path.as_ref())?.header)
}

/// Reads an all-numeric CSV with a header (evaluation points).
pub fn load_points(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let path = path.as_ref();
    let table = read_raw(path)?;
    let columns = (0..table.header.len())
        .map(|c| parse_column(&table, c))
        .collect::<Result<Vec<_>>>()?;
    let data = DMatrix::from_fn(table.rows.len(), columns.len(), |i, j| columns[j][i]);
    Ok((table.header, data))
}

/// Writes a dataset back in its original units: discrete columns as their
/// state labels, normalized columns undone.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut w = Table::create(path.as_ref())?;
    w.row(dataset.columns().iter().map(|c| c.name.clone()))?;
    for i in 0..dataset.num_samples() {
        let cells = dataset.columns().iter().enumerate().map(|(j, meta)| {
            let v = dataset.data()[(i, j)];
            match (&meta.states, meta.transform) {
                (Some(states), _) => states[v as usize].clone(),
                (None, Some((lo, hi))) => fmt_f64(lo + v * (hi - lo)),
                (None, None) => fmt_f64(v),
            }
        });
        w.row(cells)?;
    }
    w.finish()
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

/// Thin CSV writer that reports errors against the output path.
pub struct Table {
    path: String,
    writer: csv::Writer<Box<dyn Write>>,
}

impl Table {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| JupadError::io(path, e))?;
        Ok(Self::from_writer(Box::new(std::io::BufWriter::new(file)), path.display().to_string()))
    }

    pub fn from_writer(out: Box<dyn Write>, name: String) -> Self {
        Table {
            path: name,
            writer: csv::WriterBuilder::new().from_writer(out),
        }
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let path = &self.path;
        self.writer.write_record(cells).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => JupadError::io(path, io),
            other => JupadError::Config(format!("writing {path}: {other:?}")),
        })
    }

    pub fn finish(mut self) -> Result<()> {
        let path = self.path.clone();
        self.writer.flush().map_err(|e| JupadError::io(path, e))
    }
}

/// Convergence trace as `stage,block,iteration,objective` rows.
pub fn write_trace(out: &mut Table, trace: &[TraceRecord]) -> Result<()> {
    out.row(["stage", "block", "iteration", "objective"])?;
    for t in trace {
        out.row([
            t.stage.to_string(),
            t.block.clone(),
            t.iteration.to_string(),
            fmt_f64(t.objective),
        ])?;
    }
    Ok(())
}

pub fn write_densities(out: &mut Table, densities: &[f64]) -> Result<()> {
    out.row(["density"])?;
    for &d in densities {
        out.row([fmt_f64(d)])?;
    }
    Ok(())
}

/// Samples with column headers; discrete columns are written as state
/// labels when `metas` carries them.
pub fn write_samples(out: &mut Table, metas: &[ColumnMeta], samples: &DMatrix<f64>) -> Result<()> {
    out.row(metas.iter().map(|m| m.name.clone()))?;
    for i in 0..samples.nrows() {
        out.row(metas.iter().enumerate().map(|(j, m)| {
            let v = samples[(i, j)];
            match (&m.states, m.transform) {
                (Some(states), _) => states[v as usize].clone(),
                (None, Some((lo, hi))) => fmt_f64(lo + v * (hi - lo)),
                (None, None) => fmt_f64(v),
            }
        }))?;
    }
    Ok(())
}

/// Benchmark table. With `with_time = false` the wall-time column holds
/// `NA` so that repeated runs produce identical files.
pub fn write_experiment_table(out: &mut Table, rows: &[ExperimentRow], with_time: bool) -> Result<()> {
    out.row(["n_samples", "mean_d", "std_d", "trials", "infinite_trials", "wall_time_s"])?;
    for r in rows {
        out.row([
            r.n_samples.to_string(),
            fmt_f64(r.mean_d),
            fmt_f64(r.std_d),
            r.trials.to_string(),
            r.infinite.to_string(),
            if with_time { fmt_f64(r.wall_time_s) } else { "NA".into() },
        ])?;
    }
    Ok(())
}

pub const SCORE_HEADER: [&str; 5] = ["dataset", "rank", "split_seed", "accuracy", "zero_density_fraction"];

/// One score row; `split_seed` is `NA` for data that were not split.
pub fn write_score_row(
    out: &mut Table,
    dataset: &str,
    rank: usize,
    split_seed: Option<u64>,
    score: &ClassificationScore,
) -> Result<()> {
    out.row([
        dataset.to_string(),
        rank.to_string(),
        split_seed.map_or_else(|| "NA".to_string(), |s| s.to_string()),
        fmt_f64(score.accuracy),
        fmt_f64(score.zero_density_fraction),
    ])
}

/// Per-row predictions next to the true label, in state labels when known.
pub fn write_predictions(out: &mut Table, label_meta: &ColumnMeta, truth: &[f64], score: &ClassificationScore) -> Result<()> {
    let name = |v: usize| match &label_meta.states {
        Some(s) => s[v].clone(),
        None => v.to_string(),
    };
    out.row(["row", "label", "predicted"])?;
    for (i, (t, p)) in truth.iter().zip(&score.predictions).enumerate() {
        out.row([
            i.to_string(),
            name(*t as usize),
            p.map(name).unwrap_or_else(|| "NA".into()),
        ])?;
    }
    Ok(())
}
