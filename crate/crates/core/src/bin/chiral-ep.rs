use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chiral_ep::io::{dispatch, parse_config, Experiment, RunConfig};
use chiral_ep::Error;

#[derive(Parser)]
#[command(
    name = "chiral-ep",
    version,
    about = "Enantiosensitive exceptional points: locate, map, encircle, average"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and refined EPs for both enantiomers.
    EpLocate(Common),
    /// EP positions versus Γ₂/Γ₁.
    RatioSweep(Common),
    /// log₁₀ eigenvalue gap over a parameter grid.
    Map(Common),
    /// One loop around an EP with full time series.
    Encircle(Common),
    /// Final populations versus loop time, both directions and enantiomers.
    LoopSweep(Common),
    /// Orientation-averaged three-photon element, analytic and Monte Carlo.
    Average(Common),
    /// Power-law exponent of the eigenvalue splitting near a point.
    ScalingProbe(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// csv, json or both.
    #[arg(long)]
    format: Option<String>,
    /// Override or supply a key, e.g. --set gamma1=1.5e-4 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::EpLocate(c) => (Experiment::EpLocate, c),
            Command::RatioSweep(c) => (Experiment::RatioSweep, c),
            Command::Map(c) => (Experiment::EigengapMap, c),
            Command::Encircle(c) => (Experiment::Encircle, c),
            Command::LoopSweep(c) => (Experiment::LoopSweep, c),
            Command::Average(c) => (Experiment::Average, c),
            Command::ScalingProbe(c) => (Experiment::ScalingProbe, c),
        }
    }
}

fn resolve(experiment: Experiment, common: Common) -> Result<RunConfig, Error> {
    let mut overrides = Vec::new();
    for item in &common.set {
        let (k, v) = item.split_once('=').ok_or_else(|| Error::Config {
            line: None,
            message: format!("--set expects KEY=VALUE, got '{item}'"),
        })?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &common.out {
        overrides.push(("output_dir".into(), out.display().to_string()));
    }
    if let Some(f) = &common.format {
        overrides.push(("output_format".into(), f.clone()));
    }

    match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let cfg = parse_config(&text)?;
            if cfg.experiment != experiment {
                return Err(Error::Config {
                    line: None,
                    message: format!(
                        "{} declares [{}] but the subcommand is {}",
                        path.display(),
                        cfg.experiment,
                        experiment
                    ),
                });
            }
            cfg.with_overrides(&overrides)
        }
        None => RunConfig::from_pairs(experiment, overrides),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = cli.command.split();
    let cfg = match resolve(experiment, common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if matches!(e, Error::Io { .. }) {
                2
            } else {
                e.exit_code()
            };
            return ExitCode::from(code as u8);
        }
    };
    let report = dispatch(&cfg);
    for name in &report.outputs {
        println!("{}", cfg.output_dir.join(name).display());
    }
    if let Some(err) = &report.error {
        eprintln!("error [{}]: {}", err.kind, err.message);
    }
    ExitCode::from(report.exit_code as u8)
}
