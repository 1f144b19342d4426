use thiserror::Error;

pub type Result<T> = std::result::Result<T, JupadError>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data or configuration.
    Data,
    /// The numerical procedure failed (divergence, rank deficiency, ...).
    Numeric,
}

#[derive(Debug, Error)]
pub enum JupadError {
    #[error("invalid atom {atom}: {reason}")]
    InvalidAtom { atom: String, reason: String },

    #[error("invalid interval [{lo}, {hi}]: lower bound exceeds upper bound")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("grid covers only {covered:.6} of the mass of atom #{index} ({atom}), below threshold {threshold}")]
    InsufficientCoverage {
        index: usize,
        atom: String,
        covered: f64,
        threshold: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid pair ({j}, {k})")]
    InvalidPair { j: usize, k: usize },

    #[error("dimension {index} out of range for a model with {dims} dimensions")]
    DimensionOutOfRange { index: usize, dims: usize },

    #[error("simplex constraint violated: {0}")]
    NotOnSimplex(String),

    #[error("zero density: {0}")]
    ZeroDensity(String),

    #[error("column {column} is constant ({value}); cannot split it into {bins} bins")]
    DegenerateColumn { column: usize, value: f64, bins: usize },

    #[error("sample value {value} in row {row}, column {column} lies outside the grid")]
    OutOfRange { row: usize, column: usize, value: f64 },

    #[error("objective diverged (non-finite) with learning rate {rate_name} = {rate}")]
    Divergence { rate_name: &'static str, rate: f64 },

    #[error("infeasible index split: {0}; increase dictionary sizes or reduce the rank")]
    InfeasibleSplit(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("all rank candidates failed: {0}")]
    AllCandidatesFailed(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl JupadError {
    pub fn class(&self) -> ErrorClass {
        match self {
            JupadError::Divergence { .. }
            | JupadError::RankDeficient(_)
            | JupadError::AllCandidatesFailed(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    /// Short machine-readable tag for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            JupadError::InvalidAtom { .. } => "invalid_atom",
            JupadError::InvalidInterval { .. } => "invalid_interval",
            JupadError::InsufficientCoverage { .. } => "insufficient_coverage",
            JupadError::InvalidGrid(_) => "invalid_grid",
            JupadError::Config(_) => "config",
            JupadError::Shape(_) => "shape",
            JupadError::InvalidPair { .. } => "invalid_pair",
            JupadError::DimensionOutOfRange { .. } => "dimension_out_of_range",
            JupadError::NotOnSimplex(_) => "not_on_simplex",
            JupadError::ZeroDensity(_) => "zero_density",
            JupadError::DegenerateColumn { .. } => "degenerate_column",
            JupadError::OutOfRange { .. } => "out_of_range",
            JupadError::Divergence { .. } => "divergence",
            JupadError::InfeasibleSplit(_) => "infeasible_split",
            JupadError::RankDeficient(_) => "rank_deficient",
            JupadError::Stratification(_) => "stratification",
            JupadError::Parse { .. } => "parse",
            JupadError::Domain(_) => "domain",
            JupadError::CorruptModel(_) => "corrupt_model",
            JupadError::AllCandidatesFailed(_) => "all_candidates_failed",
            JupadError::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        JupadError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
