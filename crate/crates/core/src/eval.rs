//! Train/validation/test splitting, rank selection and MAP classification
//! scoring for labelled data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::atoms::Dictionary;
use crate::error::{JupadError, Result};
use crate::histogram::Dataset;
use crate::model::JointModel;
use crate::solver::{fit, FitConfig, FitOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Row counts per part by largest remainder, so they always add up to `n`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Seeded shuffle into three disjoint parts. With a label column, rows are
/// grouped by class before being dealt out, so every class is spread across
/// the parts in proportion (within one row).
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|&f| !(f > 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(JupadError::Config(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let n = dataset.num_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    if let Some(label) = dataset.label() {
        let mut classes: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for &i in &order {
            classes.entry(dataset.data()[(i, label)] as u64).or_default().push(i);
        }
        if let Some((class, rows)) = classes.iter().find(|(_, rows)| rows.len() < 3) {
            return Err(JupadError::Stratification(format!(
                "class {class} has {} rows, fewer than the 3 splits",
                rows.len()
            )));
        }
        order = classes.into_values().flatten().collect();
    }

    let target = apportion(n, &fr);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (pos, &row) in order.iter().enumerate() {
        // deal each row to the part furthest behind its share of the rows so far
        let done = (pos + 1) as f64 / n as f64;
        let pick = (0..3)
            .filter(|&p| parts[p].len() < target[p])
            .max_by(|&a, &b| {
                let da = target[a] as f64 * done - parts[a].len() as f64;
                let db = target[b] as f64 * done - parts[b].len() as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("targets sum to the row count");
        parts[pick].push(row);
    }
    if parts.iter().any(|p| p.is_empty()) {
        return Err(JupadError::Shape(format!("{n} rows are too few for three non-empty splits")));
    }
    Ok(Splits {
        train: dataset.select_rows(&parts[0])?,
        validation: dataset.select_rows(&parts[1])?,
        test: dataset.select_rows(&parts[2])?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationScore {
    pub accuracy: f64,
    /// Rows with a wrong MAP label.
    pub error_fraction: f64,
    /// Rows where the model density vanished for every label.
    pub zero_density_fraction: f64,
    /// Per-row prediction; `None` for zero-density rows.
    pub predictions: Vec<Option<usize>>,
}

/// MAP accuracy of `model` on the rows of `test`, comparing against column
/// `label_dim`.
pub fn classification_accuracy(model: &JointModel, test: &Dataset, label_dim: usize) -> Result<ClassificationScore> {
    if test.num_dims() != model.num_dims() {
        return Err(JupadError::Shape(format!(
            "test data has {} columns, model has {} dimensions",
            test.num_dims(),
            model.num_dims()
        )));
    }
    let n = test.num_samples();
    let mut correct = 0usize;
    let mut zero = 0usize;
    let mut predictions = Vec::with_capacity(n);
    for i in 0..n {
        let x = test.row(i);
        match model.map_classify(label_dim, &x) {
            Ok((y, _)) => {
                if y as f64 == x[label_dim] {
                    correct += 1;
                }
                predictions.push(Some(y));
            }
            Err(JupadError::ZeroDensity(_)) => {
                zero += 1;
                predictions.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let total = n as f64;
    Ok(ClassificationScore {
        accuracy: correct as f64 / total,
        error_fraction: (n - correct - zero) as f64 / total,
        zero_density_fraction: zero as f64 / total,
        predictions,
    })
}

#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub rank: usize,
    /// Validation accuracy, or the message of the error that stopped the fit.
    pub score: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct RankSelection {
    pub rank: usize,
    pub outcome: FitOutcome,
    pub candidates: Vec<CandidateResult>,
}

fn evaluate_candidate(
    train: &Dataset,
    validation: &Dataset,
    dictionaries: &[Dictionary],
    config: &FitConfig,
    rank: usize,
    label: usize,
) -> Result<(FitOutcome, f64)> {
    let mut cfg = config.clone();
    cfg.rank = rank;
    let outcome = fit(train, dictionaries, &cfg)?;
    let score = classification_accuracy(&outcome.model, validation, label)?;
    Ok((outcome, score.accuracy))
}

/// Fits every candidate rank on `train` and keeps the one with the best
/// validation accuracy; ties go to the smallest rank. Candidates whose fit
/// fails are skipped.
pub fn select_rank(
    train: &Dataset,
    validation: &Dataset,
    dictionaries: &[Dictionary],
    candidates: &[usize],
    config: &FitConfig,
) -> Result<RankSelection> {
    let label = train
        .label()
        .ok_or_else(|| JupadError::Config("rank selection needs a label column".into()))?;
    if candidates.is_empty() {
        return Err(JupadError::Config("no rank candidates given".into()));
    }
    let mut ranks = candidates.to_vec();
    ranks.sort_unstable();
    ranks.dedup();

    let run = |&rank: &usize| evaluate_candidate(train, validation, dictionaries, config, rank, label);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(FitOutcome, f64)>> = if config.strict_deterministic {
        ranks.iter().map(run).collect()
    } else {
        ranks.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(FitOutcome, f64)>> = ranks.iter().map(run).collect();

    let mut best: Option<(usize, FitOutcome, f64)> = None;
    let mut report = Vec::with_capacity(ranks.len());
    for (&rank, result) in ranks.iter().zip(results) {
        match result {
            Ok((outcome, acc)) => {
                log::info!("rank {rank}: validation accuracy {acc:.4}");
                report.push(CandidateResult { rank, score: Ok(acc) });
                if best.as_ref().is_none_or(|(_, _, b)| acc > *b) {
                    best = Some((rank, outcome, acc));
                }
            }
            Err(e) => {
                log::warn!("rank {rank} failed: {e}");
                report.push(CandidateResult {
                    rank,
                    score: Err(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((rank, outcome, _)) => Ok(RankSelection {
            rank,
            outcome,
            candidates: report,
        }),
        None => Err(JupadError::AllCandidatesFailed(
            report
                .iter()
                .map(|c| format!("F={}: {}", c.rank, c.score.as_ref().err().map(String::as_str).unwrap_or("")))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}
