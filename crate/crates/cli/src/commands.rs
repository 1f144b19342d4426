use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jupad::eval::{classification_accuracy, select_rank, split};
use jupad::histogram::{histogram_1d, propose_grid, propose_grid_spanning};
use jupad::io::config::{content_hash, parse_synth_config};
use jupad::io::model_file::{load_model, save_model, Provenance, SavedModel};
use jupad::io::table::{
    fmt_f64, load_csv, load_csv_with_meta, read_header, write_densities, write_experiment_table,
    write_predictions, write_samples, write_score_row, write_trace, ColumnSpec, Table, SCORE_HEADER,
};
use jupad::io::load_run_config;
use jupad::synth::run_experiment;
use jupad::{fit, ColumnKind, JupadError};

use crate::{Command, Output};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit { config } => fit_cmd(&config),
        Command::EvalDensity { model, points, out } => eval_density(&model, &points, &out),
        Command::Classify {
            model,
            data,
            label,
            predictions,
            out,
        } => classify(&model, &data, label.as_deref(), predictions.as_deref(), &out),
        Command::Sample { model, count, seed, out } => sample(&model, count, seed, &out),
        Command::Synth { config, out } => synth(&config, &out),
        Command::Inspect {
            data,
            discrete,
            bins,
            out,
        } => inspect(&data, &discrete, bins, &out),
    }
}

fn open(out: &Output) -> Result<Table> {
    Ok(match &out.output {
        Some(path) => Table::create(path)?,
        None => Table::from_writer(Box::new(std::io::stdout()), "<stdout>".into()),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn fit_cmd(config_path: &Path) -> Result<()> {
    let (config, hash) = load_run_config(config_path)?;
    let dataset = load_csv(&config.data.path, &config.data.columns, config.data.label.as_deref())
        .with_context(|| format!("reading {}", config.data.path.display()))?;
    let dictionaries = config.dictionary.build_all(&dataset)?;

    let (outcome, rank) = match &config.selection {
        None => (fit(&dataset, &dictionaries, &config.fit)?, config.fit.rank),
        Some(sel) => {
            let parts = split(&dataset, sel.fractions, sel.split_seed)?;
            let chosen = select_rank(&parts.train, &parts.validation, &dictionaries, &sel.candidates, &config.fit)?;
            for c in &chosen.candidates {
                match &c.score {
                    Ok(acc) => log::info!("rank {}: validation accuracy {acc}", c.rank),
                    Err(e) => log::warn!("rank {} failed: {e}", c.rank),
                }
            }
            let label = dataset.label().expect("validated: selection needs a label");
            let score = classification_accuracy(&chosen.outcome.model, &parts.test, label)?;
            if let Some(path) = &config.output.scores {
                let mut t = Table::create(path)?;
                t.row(SCORE_HEADER)?;
                write_score_row(&mut t, &stem(&config.data.path), chosen.rank, Some(sel.split_seed), &score)?;
                t.finish()?;
            }
            println!(
                "selected rank {} (test accuracy {:.4}, zero-density fraction {:.4})",
                chosen.rank, score.accuracy, score.zero_density_fraction
            );
            (chosen.outcome, chosen.rank)
        }
    };

    let saved = SavedModel {
        model: outcome.model,
        columns: dataset.columns().to_vec(),
        label: dataset.label(),
        provenance: Provenance::new(Some(config.fit.seed), Some(hash)),
    };
    save_model(&config.output.model, &saved)?;
    if let Some(path) = &config.output.trace {
        let mut t = Table::create(path)?;
        write_trace(&mut t, &outcome.trace)?;
        t.finish()?;
    }
    println!(
        "rank {rank}: pairwise cost {} after {} refinement sweeps; model written to {}",
        fmt_f64(outcome.report.final_objective),
        outcome.report.refine_sweeps,
        config.output.model.display()
    );
    Ok(())
}

fn eval_density(model_path: &Path, points: &Path, out: &Output) -> Result<()> {
    let saved = load_model(model_path)?;
    let data = load_csv_with_meta(points, &saved.columns, None)?;
    let densities = (0..data.num_samples())
        .map(|i| {
            saved
                .model
                .pdf_eval(&data.row(i))
                .with_context(|| format!("evaluating row {}", i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = open(out)?;
    write_densities(&mut t, &densities)?;
    t.finish()?;
    Ok(())
}

fn classify(model_path: &Path, data: &Path, label: Option<&str>, predictions: Option<&Path>, out: &Output) -> Result<()> {
    let saved = load_model(model_path)?;
    let label_dim = match label {
        Some(name) => saved
            .columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| JupadError::Config(format!("model has no column {name:?}")))?,
        None => saved
            .label
            .ok_or_else(|| JupadError::Config("model has no stored label; pass --label".into()))?,
    };
    if !matches!(saved.columns[label_dim].kind, ColumnKind::Discrete { .. }) {
        bail!(JupadError::Config(format!("column {:?} is not discrete", saved.columns[label_dim].name)));
    }
    let test = load_csv_with_meta(data, &saved.columns, Some(label_dim))?;
    let score = classification_accuracy(&saved.model, &test, label_dim)?;
    if let Some(path) = predictions {
        let truth: Vec<f64> = test.data().column(label_dim).iter().copied().collect();
        let mut t = Table::create(path)?;
        write_predictions(&mut t, &saved.columns[label_dim], &truth, &score)?;
        t.finish()?;
    }
    let mut t = open(out)?;
    t.row(SCORE_HEADER)?;
    write_score_row(&mut t, &stem(data), saved.model.rank(), None, &score)?;
    t.finish()?;
    Ok(())
}

fn sample(model_path: &Path, count: usize, seed: u64, out: &Output) -> Result<()> {
    if count == 0 {
        bail!(JupadError::Config("--count must be positive".into()));
    }
    let saved = load_model(model_path)?;
    let samples = saved.model.sample(count, seed)?;
    let mut t = open(out)?;
    write_samples(&mut t, &saved.columns, &samples)?;
    t.finish()?;
    Ok(())
}

fn synth(config_path: &PathBuf, out: &Output) -> Result<()> {
    let text = fs::read_to_string(config_path).map_err(|e| JupadError::Io {
        path: config_path.display().to_string(),
        source: e,
    })?;
    let config = parse_synth_config(&text)?;
    let spec = config.synth_spec()?;
    log::info!("synthetic run, config hash {}", content_hash(text.as_bytes()));
    let rows = run_experiment(&spec, &config.sizes, &config.run, config.trials)?;
    let with_time = config.record_time && !config.run.fit.strict_deterministic;
    let mut t = open(out)?;
    write_experiment_table(&mut t, &rows, with_time)?;
    t.finish()?;
    Ok(())
}

fn inspect(data: &Path, discrete: &[String], bins: usize, out: &Output) -> Result<()> {
    let header = read_header(data)?;
    for name in discrete {
        if !header.contains(name) {
            bail!(JupadError::Config(format!("column {name:?} not found in the header")));
        }
    }
    let specs: Vec<ColumnSpec> = header
        .iter()
        .map(|h| {
            if discrete.contains(h) {
                ColumnSpec::discrete(h)
            } else {
                ColumnSpec::continuous(h)
            }
        })
        .collect();
    let dataset = load_csv(data, &specs, None)?;
    let n = dataset.num_samples() as f64;
    let mut t = open(out)?;
    t.row(["column", "bin", "low", "high", "state", "count", "fraction"])?;
    for (c, meta) in dataset.columns().iter().enumerate() {
        let grid = match propose_grid(&dataset, c, bins) {
            Err(JupadError::DegenerateColumn { value, .. }) => {
                propose_grid_spanning(&dataset, c, bins, Some((value - 0.5, value + 0.5)))?
            }
            other => other?,
        };
        let fractions = histogram_1d(&dataset, &grid, c)?;
        for (b, &f) in fractions.iter().enumerate() {
            let (lo, hi) = grid.interval(b);
            let state = match &meta.states {
                Some(s) => s[b].clone(),
                None => String::new(),
            };
            t.row([
                meta.name.clone(),
                b.to_string(),
                fmt_f64(lo),
                fmt_f64(hi),
                state,
                ((f * n).round() as u64).to_string(),
                fmt_f64(f),
            ])?;
        }
    }
    t.finish()?;
    Ok(())
}
