mod args;

use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use gridpe::analysis::{cell_count_percentiles, RunSummary};
use gridpe::harness::{export_snapshots, run_batch, run_with_truth, sample_truth, RunConfig};
use gridpe::likelihood::GroundTruth;
use gridpe::Error;

use args::{Cli, Command, RunArgs};

/// Like `println!`, but a closed stdout (e.g. piping into `head`) is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Domain(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))
                .map_err(Failure::Config)?;
            toml::from_str(&text)
                .with_context(|| format!("invalid config file {}", path.display()))
                .map_err(Failure::Config)?
        }
        None => RunConfig::default(),
    };
    args.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let summary = run_batch(&cfg)?;
    let last = summary.median_error.last().copied().unwrap_or(f64::NAN);
    out!(
        "{} trials, {} failed; final median error {last:e}; cells q2.5/q50/q97.5 = {}/{}/{}",
        summary.n_trials,
        summary.failures.len(),
        summary.percentiles_cells.q2_5,
        summary.percentiles_cells.q50,
        summary.percentiles_cells.q97_5,
    );
    if let Some(dir) = &cfg.output_dir {
        out!("results in {}", dir.display());
    }
    Ok(())
}

fn snapshot(args: &RunArgs, omega: Option<f64>) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let Some(dir) = &cfg.output_dir else {
        return Err(Failure::Config(anyhow::anyhow!("snapshot needs --out")));
    };
    let sampled = sample_truth(&cfg, 0);
    let truth = GroundTruth { omega_true: omega.unwrap_or(sampled.omega_true), ..sampled };
    let trace = run_with_truth(&cfg, &truth, 0)?;
    for path in export_snapshots(dir, &trace)? {
        out!("{}", path.display());
    }
    Ok(())
}

fn table(paths: &[impl AsRef<Path>]) -> Result<(), Failure> {
    out!("{:<32} {:>14} {:>10} {:>8} {:>8} {:>8}", "summary", "study", "w_th", "q2.5", "q50", "q97.5");
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(Failure::Config)?;
        let summary: RunSummary = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a run summary", path.display()))
            .map_err(Failure::Config)?;
        let p = cell_count_percentiles(&summary.final_cell_counts)?;
        let field = |k: &str| summary.config.get(k).map(|v| v.to_string().trim_matches('"').to_owned());
        out!(
            "{:<32} {:>14} {:>10} {:>8} {:>8} {:>8}",
            path.display(),
            field("study").unwrap_or_default(),
            field("w_th").unwrap_or_default(),
            p.q2_5,
            p.q50,
            p.q97_5
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Snapshot { run, omega } => snapshot(run, *omega),
        Command::Table { summaries } => table(summaries),
        Command::Version => {
            out!("gridpe {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
