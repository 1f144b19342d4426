//! One-dimensional density/mass atoms, per-dimension dictionaries of atoms and
//! their discretization onto a grid of intervals.
//!
//! A dictionary column `l` of dimension `n` is an atom; once discretized on the
//! grid of that dimension it becomes column `l` of the interval-mass matrix
//! `D̄ₙ` (shape `Iₙ × Lₙ`), where entry `(i, l)` is the probability that atom `l`
//! assigns to interval `i`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erf_inv;

use crate::error::{JupadError, Result};

/// Default fraction of every atom's mass that a grid must capture.
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AtomSpec {
    Gaussian { mean: f64, variance: f64 },
    Laplacian { mean: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
    DiscreteIndicator { state: usize, num_states: usize },
}

impl fmt::Display for AtomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AtomSpec::Gaussian { mean, variance } => {
                write!(f, "Gaussian(mean={mean}, variance={variance})")
            }
            AtomSpec::Laplacian { mean, scale } => write!(f, "Laplacian(mean={mean}, scale={scale})"),
            AtomSpec::Uniform { low, high } => write!(f, "Uniform({low}, {high})"),
            AtomSpec::DiscreteIndicator { state, num_states } => {
                write!(f, "Indicator(state={state} of {num_states})")
            }
        }
    }
}

fn gaussian_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

impl AtomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(JupadError::InvalidAtom {
                atom: self.to_string(),
                reason: reason.to_string(),
            })
        };
        match *self {
            AtomSpec::Gaussian { mean, variance } => {
                if !mean.is_finite() || !variance.is_finite() {
                    return bad("parameters must be finite");
                }
                if variance <= 0.0 {
                    return bad("variance must be positive");
                }
            }
            AtomSpec::Laplacian { mean, scale } => {
                if !mean.is_finite() || !scale.is_finite() {
                    return bad("parameters must be finite");
                }
                if scale <= 0.0 {
                    return bad("scale must be positive");
                }
            }
            AtomSpec::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() {
                    return bad("bounds must be finite");
                }
                if low >= high {
                    return bad("low must be below high");
                }
            }
            AtomSpec::DiscreteIndicator { state, num_states } => {
                if num_states == 0 {
                    return bad("num_states must be at least 1");
                }
                if state >= num_states {
                    return bad("state index out of range");
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, AtomSpec::DiscreteIndicator { .. })
    }

    /// Density (continuous atoms) or mass (indicator atoms) at `x`.
    pub fn pdf_at(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.pdf_unchecked(x))
    }

    pub(crate) fn pdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            AtomSpec::Gaussian { mean, variance } => {
                let d = x - mean;
                (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
            }
            AtomSpec::Laplacian { mean, scale } => (-(x - mean).abs() / scale).exp() / (2.0 * scale),
            AtomSpec::Uniform { low, high } => {
                if x >= low && x <= high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            AtomSpec::DiscreteIndicator { state, .. } => {
                if x == state as f64 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Cumulative distribution `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            AtomSpec::Gaussian { mean, variance } => {
                gaussian_upper_tail(-(x - mean) / variance.sqrt())
            }
            AtomSpec::Laplacian { mean, scale } => {
                if x < mean {
                    0.5 * ((x - mean) / scale).exp()
                } else {
                    1.0 - 0.5 * (-(x - mean) / scale).exp()
                }
            }
            AtomSpec::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            AtomSpec::DiscreteIndicator { state, .. } => {
                if x >= state as f64 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Probability of the interval. Indicator atoms use the half-open
    /// convention `[lo, hi)`; for continuous atoms the endpoints carry no mass.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        self.validate()?;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(JupadError::InvalidInterval { lo, hi });
        }
        Ok(self.interval_mass_unchecked(lo, hi))
    }

    pub(crate) fn interval_mass_unchecked(&self, lo: f64, hi: f64) -> f64 {
        let mass = match *self {
            AtomSpec::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let zl = (lo - mean) / sd;
                let zh = (hi - mean) / sd;
                // difference of the tail on the side of the interval keeps precision
                if zl >= 0.0 {
                    gaussian_upper_tail(zl) - gaussian_upper_tail(zh)
                } else if zh <= 0.0 {
                    gaussian_upper_tail(-zh) - gaussian_upper_tail(-zl)
                } else {
                    1.0 - gaussian_upper_tail(zh) - gaussian_upper_tail(-zl)
                }
            }
            AtomSpec::Laplacian { mean, scale } => {
                let upper = |x: f64| 0.5 * (-(x - mean) / scale).exp();
                let lower = |x: f64| 0.5 * ((x - mean) / scale).exp();
                if lo >= mean {
                    upper(lo) - upper(hi)
                } else if hi <= mean {
                    lower(hi) - lower(lo)
                } else {
                    1.0 - upper(hi) - lower(lo)
                }
            }
            AtomSpec::Uniform { low, high } => {
                let width = hi.min(high) - lo.max(low);
                if width > 0.0 {
                    width / (high - low)
                } else {
                    0.0
                }
            }
            AtomSpec::DiscreteIndicator { state, .. } => {
                let s = state as f64;
                if lo <= s && s < hi {
                    1.0
                } else {
                    0.0
                }
            }
        };
        mass.clamp(0.0, 1.0)
    }

    /// Quantile function; for indicator atoms this is the state itself.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            AtomSpec::Gaussian { mean, variance } => {
                mean + variance.sqrt() * SQRT_2 * erf_inv(2.0 * p - 1.0)
            }
            AtomSpec::Laplacian { mean, scale } => {
                if p < 0.5 {
                    mean + scale * (2.0 * p).ln()
                } else {
                    mean - scale * (2.0 - 2.0 * p).ln()
                }
            }
            AtomSpec::Uniform { low, high } => low + p * (high - low),
            AtomSpec::DiscreteIndicator { state, .. } => state as f64,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AtomSpec::Gaussian { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
            AtomSpec::Laplacian { mean, scale } => {
                // inverse cdf on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                if u == -0.5 {
                    return mean;
                }
                mean - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            AtomSpec::Uniform { low, high } => low + rng.random::<f64>() * (high - low),
            AtomSpec::DiscreteIndicator { state, .. } => state as f64,
        }
    }
}

/// Value domain of one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Continuous { low: f64, high: f64 },
    Discrete { num_states: usize },
}

impl Domain {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Discrete { .. })
    }
}

/// Ordered collection of atoms for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    atoms: Vec<AtomSpec>,
    domain: Domain,
}

impl Dictionary {
    pub fn new(atoms: Vec<AtomSpec>, domain: Domain) -> Result<Self> {
        if atoms.is_empty() {
            return Err(JupadError::Config("a dictionary needs at least one atom".into()));
        }
        for atom in &atoms {
            atom.validate()?;
            match (domain, atom) {
                (Domain::Discrete { num_states }, AtomSpec::DiscreteIndicator { num_states: c, .. }) => {
                    if *c != num_states {
                        return Err(JupadError::InvalidAtom {
                            atom: atom.to_string(),
                            reason: format!("dictionary domain has {num_states} states"),
                        });
                    }
                }
                (Domain::Discrete { .. }, _) | (Domain::Continuous { .. }, AtomSpec::DiscreteIndicator { .. }) => {
                    return Err(JupadError::InvalidAtom {
                        atom: atom.to_string(),
                        reason: "atom kind does not match the dictionary domain".into(),
                    });
                }
                (Domain::Continuous { .. }, _) => {}
            }
        }
        if let Domain::Continuous { low, high } = domain {
            if !(low < high) {
                return Err(JupadError::Config(format!("empty dictionary range [{low}, {high}]")));
            }
        }
        if let Domain::Discrete { num_states: 0 } = domain {
            return Err(JupadError::Config("discrete domain needs at least one state".into()));
        }
        Ok(Dictionary { atoms, domain })
    }

    /// One indicator atom per state of a `num_states`-state variable.
    pub fn identity(num_states: usize) -> Result<Self> {
        let atoms = (0..num_states)
            .map(|state| AtomSpec::DiscreteIndicator { state, num_states })
            .collect();
        Dictionary::new(atoms, Domain::Discrete { num_states })
    }

    /// Continuous dictionary whose declared range is the hull of the atoms' central
    /// `coverage` intervals.
    pub fn from_atoms(atoms: Vec<AtomSpec>, coverage: f64) -> Result<Self> {
        let mut low = f64::INFINITY;
        let mut high = f64::NEG_INFINITY;
        for atom in &atoms {
            atom.validate()?;
            let (l, h) = central_interval(atom, coverage);
            low = low.min(l);
            high = high.max(h);
        }
        Dictionary::new(atoms, Domain::Continuous { low, high })
    }

    pub fn atoms(&self) -> &[AtomSpec] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Pdf (or pmf) of every atom at `x`.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        self.atoms.iter().map(|a| a.pdf_unchecked(x)).collect()
    }

    /// Smallest interval containing the central `coverage` mass of every atom
    /// as well as the declared range.
    pub fn support_hull(&self, coverage: f64) -> (f64, f64) {
        let (mut low, mut high) = match self.domain {
            Domain::Continuous { low, high } => (low, high),
            Domain::Discrete { num_states } => (0.0, num_states as f64 - 1.0),
        };
        for atom in &self.atoms {
            let (l, h) = central_interval(atom, coverage);
            low = low.min(l);
            high = high.max(h);
        }
        (low, high)
    }
}

fn central_interval(atom: &AtomSpec, coverage: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - coverage.clamp(0.0, 1.0));
    match atom {
        AtomSpec::Uniform { low, high } => (*low, *high),
        _ => (atom.quantile(tail), atom.quantile(1.0 - tail)),
    }
}

/// Interval edges of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    edges: Vec<f64>,
    discrete: bool,
}

impl Grid {
    pub fn continuous(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(JupadError::InvalidGrid(format!(
                "a continuous grid needs at least 2 intervals, got {}",
                edges.len().saturating_sub(1)
            )));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(JupadError::InvalidGrid("edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(JupadError::InvalidGrid("edges must be strictly increasing".into()));
        }
        Ok(Grid { edges, discrete: false })
    }

    /// `bins` equal-width intervals spanning `[low, high]`.
    pub fn uniform(low: f64, high: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(JupadError::InvalidGrid(format!("need at least 2 bins, got {bins}")));
        }
        let width = (high - low) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| low + width * i as f64).collect();
        edges[bins] = high;
        Grid::continuous(edges)
    }

    /// One bin per state, bin `s` being `[s - 1/2, s + 1/2)`.
    pub fn discrete(num_states: usize) -> Result<Self> {
        if num_states == 0 {
            return Err(JupadError::InvalidGrid("discrete grid needs at least one state".into()));
        }
        let edges = (0..=num_states).map(|s| s as f64 - 0.5).collect();
        Ok(Grid { edges, discrete: true })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn low(&self) -> f64 {
        self.edges[0]
    }

    pub fn high(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    /// Bin containing `x`. Bins are half-open except the last, which also
    /// contains the upper edge. Discrete grids accept only integer states.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if self.discrete {
            let states = self.num_bins();
            if x.fract() == 0.0 && x >= 0.0 && x < states as f64 {
                return Some(x as usize);
            }
            return None;
        }
        if !(x >= self.low() && x <= self.high()) {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= x);
        Some(idx.saturating_sub(1).min(self.num_bins() - 1))
    }
}

/// Interval-mass matrix `D̄` of a dictionary on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedDictionary {
    matrix: DMatrix<f64>,
    dictionary: Dictionary,
    grid: Grid,
    coverage: Vec<f64>,
}

impl DiscretizedDictionary {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Mass of each atom captured by the grid before renormalization.
    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    pub fn num_bins(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_atoms(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Discretize every atom of `dict` on `grid`; each column is divided by the
/// mass the grid captures so that it sums to one.
pub fn discretize(dict: &Dictionary, grid: &Grid, coverage_threshold: f64) -> Result<DiscretizedDictionary> {
    match dict.domain() {
        Domain::Discrete { num_states } => {
            if !grid.is_discrete() || grid.num_bins() != num_states {
                return Err(JupadError::InvalidGrid(format!(
                    "discrete dictionary with {num_states} states needs a grid with one bin per state"
                )));
            }
        }
        Domain::Continuous { .. } => {
            if grid.is_discrete() {
                return Err(JupadError::InvalidGrid(
                    "continuous dictionary cannot be discretized on a state grid".into(),
                ));
            }
        }
    }
    let bins = grid.num_bins();
    let mut matrix = DMatrix::zeros(bins, dict.len());
    let mut coverage = Vec::with_capacity(dict.len());
    for (l, atom) in dict.atoms().iter().enumerate() {
        let mut covered = 0.0;
        for i in 0..bins {
            let (lo, hi) = grid.interval(i);
            let m = atom.interval_mass_unchecked(lo, hi);
            matrix[(i, l)] = m;
            covered += m;
        }
        if !(covered >= coverage_threshold) || covered <= 0.0 {
            return Err(JupadError::InsufficientCoverage {
                index: l,
                atom: atom.to_string(),
                covered,
                threshold: coverage_threshold,
            });
        }
        matrix.column_mut(l).unscale_mut(covered);
        coverage.push(covered);
    }
    Ok(DiscretizedDictionary {
        matrix,
        dictionary: dict.clone(),
        grid: grid.clone(),
        coverage,
    })
}

/// Spread parameter of a family placed on the preset's mean lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyParam {
    Gaussian { variance: f64 },
    Laplacian { scale: f64 },
}

/// Inspection-style dictionary recipe: atom means on a regular lattice over
/// `[low, high]`, one atom per family per mean, plus optional uniform atoms
/// partitioning the range.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPreset {
    pub low: f64,
    pub high: f64,
    pub spacing: f64,
    pub families: Vec<FamilyParam>,
    pub uniforms: usize,
}

impl GridPreset {
    /// Gaussians with variance 1 every 2 units on [10, 22] plus two uniforms.
    pub fn seeds() -> Self {
        GridPreset {
            low: 10.0,
            high: 22.0,
            spacing: 2.0,
            families: vec![FamilyParam::Gaussian { variance: 1.0 }],
            uniforms: 2,
        }
    }

    /// Gaussians with variance 4 every 4 units on [-90, -36].
    pub fn wifi() -> Self {
        GridPreset {
            low: -90.0,
            high: -36.0,
            spacing: 4.0,
            families: vec![FamilyParam::Gaussian { variance: 4.0 }],
            uniforms: 0,
        }
    }

    /// Gaussians with variance 4e-4 every 0.04 on [0, 1] (normalized pixels).
    pub fn kth() -> Self {
        GridPreset {
            low: 0.0,
            high: 1.0,
            spacing: 0.04,
            families: vec![FamilyParam::Gaussian { variance: 4e-4 }],
            uniforms: 0,
        }
    }

    pub fn named(name: &str) -> Option<Self> {
        match name {
            "seeds" => Some(Self::seeds()),
            "wifi" => Some(Self::wifi()),
            "kth" => Some(Self::kth()),
            _ => None,
        }
    }

    /// Lattice of means `low, low + spacing, ...` up to and including `high`.
    pub fn means(&self) -> Vec<f64> {
        let count = ((self.high - self.low) / self.spacing + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.low + self.spacing * i as f64).collect()
    }
}

pub fn build_dictionary_grid_preset(preset: &GridPreset) -> Result<Dictionary> {
    if preset.families.is_empty() {
        return Err(JupadError::Config("grid preset needs at least one atom family".into()));
    }
    if !(preset.spacing > 0.0) || !preset.spacing.is_finite() {
        return Err(JupadError::Config(format!("spacing must be positive, got {}", preset.spacing)));
    }
    if !(preset.high > preset.low) {
        return Err(JupadError::Config(format!(
            "empty preset range [{}, {}]",
            preset.low, preset.high
        )));
    }
    let means = preset.means();
    let mut atoms = Vec::with_capacity(means.len() * preset.families.len() + preset.uniforms);
    for family in &preset.families {
        for &mean in &means {
            atoms.push(match *family {
                FamilyParam::Gaussian { variance } => AtomSpec::Gaussian { mean, variance },
                FamilyParam::Laplacian { scale } => AtomSpec::Laplacian { mean, scale },
            });
        }
    }
    if preset.uniforms > 0 {
        let width = (preset.high - preset.low) / preset.uniforms as f64;
        for u in 0..preset.uniforms {
            let low = preset.low + width * u as f64;
            let high = if u + 1 == preset.uniforms {
                preset.high
            } else {
                preset.low + width * (u + 1) as f64
            };
            atoms.push(AtomSpec::Uniform { low, high });
        }
    }
    Dictionary::new(
        atoms,
        Domain::Continuous {
            low: preset.low,
            high: preset.high,
        },
    )
}
