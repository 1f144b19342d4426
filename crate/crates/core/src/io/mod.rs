//! File formats: CSV tables, the JSON model file and the TOML run configuration.

pub mod config;
pub mod model_file;
pub mod table;

pub use config::{
    load_run_config, parse_run_config, parse_synth_config, DictionaryConfig, DictionaryRecipe, RunConfig, SynthRunConfig,
};
pub use model_file::{load_model, save_model, Provenance, SavedModel};
pub use table::{load_csv, load_csv_with_meta, load_points, read_header, write_dataset, ColumnSpec, ColumnType, Table};
