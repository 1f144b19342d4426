//! Joint density estimation from pairwise marginals.
//!
//! The estimated density is a rank-`F` mixture of products whose per-dimension
//! factors are convex combinations of fixed dictionary atoms (Gaussian,
//! Laplacian, uniform, or discrete indicators). Only 2D histograms of the data
//! are needed: each pair's coupling matrix is fitted by mirror descent, the
//! couplings are concatenated and factorized by successive projection, and
//! the resulting weights are refined jointly on the pairwise cost.

pub mod atoms;
pub mod error;
pub mod eval;
pub mod histogram;
pub mod io;
pub mod model;
pub mod solver;
pub mod synth;

pub use atoms::{AtomSpec, Dictionary, DiscretizedDictionary, Domain, Grid, GridPreset};
pub use error::{ErrorClass, JupadError, Result};
pub use histogram::{ColumnKind, ColumnMeta, Dataset, PairwiseHistogram};
pub use model::{JointModel, Marginal1d, ModeFactor};
pub use solver::{fit, FitConfig, FitOutcome, TraceRecord};
