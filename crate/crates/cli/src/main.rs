use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use jupad::{ErrorClass, JupadError};

mod commands;

/// Joint density estimation from pairwise histograms.
#[derive(Debug, Parser)]
#[command(name = "jupad", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model as described by a TOML run configuration.
    Fit {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the model density at the points of a CSV file.
    EvalDensity {
        #[arg(long)]
        model: PathBuf,
        /// CSV with a header naming the model's columns.
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// MAP-classify the rows of a labelled CSV and report accuracy.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Label column; defaults to the one stored in the model.
        #[arg(long)]
        label: Option<String>,
        /// Per-row predictions CSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Draw samples from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Run a synthetic benchmark and write the error table.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Per-column histograms of a CSV file.
    Inspect {
        #[arg(long)]
        data: PathBuf,
        /// Columns to treat as discrete.
        #[arg(long = "discrete")]
        discrete: Vec<String>,
        #[arg(long, default_value_t = 16)]
        bins: usize,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Args)]
struct Output {
    /// Output CSV; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    match err.chain().find_map(|e| e.downcast_ref::<JupadError>()) {
        Some(e) => match e.class() {
            ErrorClass::Data => (EXIT_DATA, e.kind()),
            ErrorClass::Numeric => (EXIT_NUMERIC, e.kind()),
        },
        None => (EXIT_DATA, "other"),
    }
}

/// The error chain joined with ": ", skipping causes already quoted by the
/// message above them.
fn chain_message(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

/// One JSON object per line on stderr.
fn report(code: u8, kind: &str, message: &str) {
    let record = serde_json::json!({
        "level": "error",
        "exit_code": code,
        "kind": kind,
        "message": message,
    });
    eprintln!("{record}");
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("JUPAD_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| JupadError::Config(format!("JUPAD_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            report(EXIT_USAGE, "usage", first.trim_start_matches("error: "));
            eprint!("{}", e.render());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            report(code, kind, &chain_message(&err));
            ExitCode::from(code)
        }
    }
}
