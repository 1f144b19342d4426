//! TOML run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atoms::{build_dictionary_grid_preset, AtomSpec, Dictionary, FamilyParam, GridPreset};
use crate::error::{JupadError, Result};
use crate::histogram::{ColumnKind, Dataset};
use crate::io::table::ColumnSpec;
use crate::solver::FitConfig;
use crate::synth::{ExperimentConfig, SynthSpec};

/// How the dictionary of one continuous column is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionaryRecipe {
    /// One of the built-in lattices: `seeds`, `wifi` or `kth`.
    Preset { name: String },
    /// Lattice of means with the given spacing; `low`/`high` default to the
    /// column's observed range.
    Grid {
        #[serde(default)]
        low: Option<f64>,
        #[serde(default)]
        high: Option<f64>,
        spacing: f64,
        families: Vec<FamilyParam>,
        #[serde(default)]
        uniforms: usize,
    },
    /// Explicit atom list.
    Atoms { atoms: Vec<AtomSpec> },
    /// Indicator per state; only valid for discrete columns, which use it
    /// regardless.
    Identity,
}

impl DictionaryRecipe {
    fn validate(&self) -> Result<()> {
        match self {
            DictionaryRecipe::Preset { name } => {
                GridPreset::named(name).ok_or_else(|| JupadError::Config(format!("unknown dictionary preset {name:?}")))?;
            }
            DictionaryRecipe::Grid { spacing, families, .. } => {
                if !(*spacing > 0.0) || !spacing.is_finite() {
                    return Err(JupadError::Config(format!("grid spacing must be positive, got {spacing}")));
                }
                if families.is_empty() {
                    return Err(JupadError::Config("grid recipe needs at least one family".into()));
                }
            }
            DictionaryRecipe::Atoms { atoms } => {
                if atoms.is_empty() {
                    return Err(JupadError::Config("atom recipe lists no atoms".into()));
                }
                for a in atoms {
                    a.validate()?;
                }
            }
            DictionaryRecipe::Identity => {}
        }
        Ok(())
    }

    /// Builds the dictionary for column `n` of `dataset`.
    pub fn build(&self, dataset: &Dataset, n: usize) -> Result<Dictionary> {
        let meta = &dataset.columns()[n];
        if let ColumnKind::Discrete { num_states } = meta.kind {
            return match self {
                DictionaryRecipe::Identity => Dictionary::identity(num_states),
                _ => Err(JupadError::Config(format!(
                    "discrete column {:?} takes the identity dictionary",
                    meta.name
                ))),
            };
        }
        match self {
            DictionaryRecipe::Preset { name } => {
                let preset = GridPreset::named(name)
                    .ok_or_else(|| JupadError::Config(format!("unknown dictionary preset {name:?}")))?;
                build_dictionary_grid_preset(&preset)
            }
            DictionaryRecipe::Grid {
                low,
                high,
                spacing,
                families,
                uniforms,
            } => {
                let col = dataset.data().column(n);
                build_dictionary_grid_preset(&GridPreset {
                    low: low.unwrap_or_else(|| col.min()),
                    high: high.unwrap_or_else(|| col.max()),
                    spacing: *spacing,
                    families: families.clone(),
                    uniforms: *uniforms,
                })
            }
            DictionaryRecipe::Atoms { atoms } => Dictionary::from_atoms(atoms.clone(), 0.999),
            DictionaryRecipe::Identity => Err(JupadError::Config(format!(
                "continuous column {:?} cannot use the identity dictionary",
                meta.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    /// Recipe for continuous columns without an entry in `columns`.
    #[serde(default)]
    pub default: Option<DictionaryRecipe>,
    #[serde(default)]
    pub columns: BTreeMap<String, DictionaryRecipe>,
}

impl DictionaryConfig {
    pub fn build_all(&self, dataset: &Dataset) -> Result<Vec<Dictionary>> {
        for name in self.columns.keys() {
            if !dataset.columns().iter().any(|c| &c.name == name) {
                return Err(JupadError::Config(format!("dictionary given for unknown column {name:?}")));
            }
        }
        dataset
            .columns()
            .iter()
            .enumerate()
            .map(|(n, meta)| {
                let recipe = match (self.columns.get(&meta.name), meta.kind) {
                    (Some(r), _) => r,
                    (None, ColumnKind::Discrete { .. }) => &DictionaryRecipe::Identity,
                    (None, ColumnKind::Continuous) => self.default.as_ref().ok_or_else(|| {
                        JupadError::Config(format!("no dictionary recipe for column {:?}", meta.name))
                    })?,
                };
                recipe.build(dataset, n)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Columns to read; empty reads every column as continuous.
    #[serde(default)]
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub label: Option<String>,
}

fn default_fractions() -> (f64, f64, f64) {
    (0.6, 0.2, 0.2)
}

/// Validation-driven rank search. When present, the data are split and the
/// rank in `[fit]` is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub candidates: Vec<usize>,
    #[serde(default = "default_fractions")]
    pub fractions: (f64, f64, f64),
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub model: PathBuf,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Test-set scores, written when rank selection is configured.
    #[serde(default)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub dictionary: DictionaryConfig,
    pub fit: FitConfig,
    #[serde(default)]
    pub selection: Option<SelectionConfig>,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.dictionary.default {
            d.validate()?;
        }
        for r in self.dictionary.columns.values() {
            r.validate()?;
        }
        if let Some(sel) = &self.selection {
            if sel.candidates.is_empty() || sel.candidates.contains(&0) {
                return Err(JupadError::Config("rank candidates must be a non-empty list of positive ranks".into()));
            }
            if self.data.label.is_none() {
                return Err(JupadError::Config("rank selection requires data.label".into()));
            }
            let mut probe = self.fit.clone();
            probe.rank = sel.candidates[0];
            probe.validate()?;
        } else {
            self.fit.validate()?;
        }
        Ok(())
    }

    /// Paths inside the file are taken relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.path);
        fix(&mut self.output.model);
        if let Some(t) = &mut self.output.trace {
            fix(t);
        }
        if let Some(s) = &mut self.output.scores {
            fix(s);
        }
    }
}

fn default_trials() -> usize {
    5
}
fn default_true() -> bool {
    true
}

/// Synthetic benchmark run: either a named experiment (`laplacian`,
/// `gaussian`, `mixed`, `hybrid`) or an explicit generator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRunConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default)]
    pub spec: Option<SynthSpec>,
    #[serde(default)]
    pub seed: u64,
    pub sizes: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub run: ExperimentConfig,
    /// Write measured wall time; forced off in strict-deterministic mode.
    #[serde(default = "default_true")]
    pub record_time: bool,
}

impl SynthRunConfig {
    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let spec = match (&self.experiment, &self.spec) {
            (Some(_), Some(_)) => {
                return Err(JupadError::Config("give either `experiment` or `spec`, not both".into()))
            }
            (None, None) => return Err(JupadError::Config("missing `experiment` or `spec`".into())),
            (None, Some(spec)) => spec.clone(),
            (Some(name), None) => match name.as_str() {
                "laplacian" => SynthSpec::laplacian_experiment(self.seed),
                "gaussian" => SynthSpec::gaussian_experiment(self.seed),
                "mixed" => SynthSpec::mixed_experiment(self.seed),
                "hybrid" => SynthSpec::hybrid_experiment(self.seed),
                other => return Err(JupadError::Config(format!("unknown experiment {other:?}"))),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_spec()?;
        self.run.fit.validate()?;
        if self.sizes.is_empty() || self.sizes.contains(&0) || self.trials == 0 || self.run.test_points == 0 {
            return Err(JupadError::Config("sizes, trials and test_points must be positive".into()));
        }
        Ok(())
    }
}

pub fn parse_synth_config(text: &str) -> Result<SynthRunConfig> {
    let config: SynthRunConfig = toml::from_str(text).map_err(|e| JupadError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates a run configuration. Returns it with paths resolved
/// against the file's directory, together with the hash of the file.
pub fn load_run_config(path: impl AsRef<Path>) -> Result<(RunConfig, String)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| JupadError::io(path, e))?;
    let mut config = parse_run_config(&text)?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok((config, content_hash(text.as_bytes())))
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| JupadError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Parses a TOML document into any configuration type, rejecting unknown keys
/// where the type does.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| JupadError::Config(e.to_string()))
}
