//! Command-line entry point: `train`, `experiment`, `stats`, and `plot`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data-integrity error,
//! 4 training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use juggler::config::{load_config, RunConfig};
use juggler::error::{Error, Result};
use juggler::harness::{cmd_experiment, cmd_stats, cmd_train};
use juggler::plot::{cmd_plot, ChartSpec, SeriesKey};
use juggler::trainer::Mode;

#[derive(Parser)]
#[command(
    name = "juggler",
    version,
    about = "Multi-agent Q-learning on a 2D ball-juggling task"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single model instance and write its CSVs and checkpoint.
    Train {
        /// key=value configuration file (defaults apply when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides the config's out_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed (instance i runs with seed + i)
        #[arg(long)]
        seed: Option<u64>,
        /// Instance id to train
        #[arg(long, default_value_t = 0)]
        instance: u32,
        /// Also write one trajectory CSV row per control step
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Run the full multi-instance experiment.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Pooled t-test of bounce counts between two epochs, plus dominance
    /// summaries, over an epochs.csv.
    Stats {
        /// Path to an epochs.csv
        input: PathBuf,
        /// Two 1-based epoch ordinals within the chosen type, e.g. 1,10
        #[arg(long, default_value = "1,10")]
        epoch_pair: String,
        /// greedy or exploratory
        #[arg(long, default_value = "greedy")]
        epoch_type: String,
        /// Directory for stats.csv (defaults to the input's directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an SVG line chart (one polyline per instance) from an
    /// epochs.csv.
    Plot {
        /// Path to an epochs.csv
        input: PathBuf,
        /// dominance or bounces
        #[arg(long)]
        series: String,
        /// greedy or exploratory
        #[arg(long, default_value = "greedy")]
        epoch_type: String,
        /// Output SVG path
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "greedy" => Ok(Mode::Greedy),
        "exploratory" => Ok(Mode::Exploratory),
        other => Err(Error::Config(format!(
            "unknown epoch type {other:?}; expected greedy or exploratory"
        ))),
    }
}

fn parse_epoch_pair(s: &str) -> Result<(usize, usize)> {
    let parse = |part: &str| {
        part.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("invalid epoch pair {s:?}; expected i,j")))
    };
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("invalid epoch pair {s:?}; expected i,j")))?;
    Ok((parse(a)?, parse(b)?))
}

fn effective_config(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(path) => load_config(&path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            instance,
            dump_trajectories,
        } => {
            let cfg = effective_config(config, out, seed)?;
            cmd_train(&cfg, instance, dump_trajectories)
        }
        Command::Experiment {
            config,
            out,
            seed,
            dump_trajectories,
        } => {
            let cfg = effective_config(config, out, seed)?;
            cmd_experiment(&cfg, dump_trajectories)
        }
        Command::Stats {
            input,
            epoch_pair,
            epoch_type,
            out,
        } => {
            let pair = parse_epoch_pair(&epoch_pair)?;
            let mode = parse_mode(&epoch_type)?;
            let out_dir = out
                .or_else(|| input.parent().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            cmd_stats(&input, pair, mode, &out_dir).map(|_| ())
        }
        Command::Plot {
            input,
            series,
            epoch_type,
            output,
        } => {
            let spec = ChartSpec {
                input,
                series: series.parse::<SeriesKey>()?,
                epoch_type: parse_mode(&epoch_type)?,
                output,
            };
            cmd_plot(&spec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
