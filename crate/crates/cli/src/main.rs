mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Source;
use crate::error::CliError;

/// Federated learning simulator with label-variance client selection.
#[derive(Parser)]
#[command(name = "fedsim", version)]
struct Cli {
    /// Cap on worker threads for per-round client training.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override such as `experiment.trials=1`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn source(&self) -> Source<'_> {
        Source {
            preset: self.preset.as_deref(),
            config: self.config.as_deref(),
            overrides: &self.overrides,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print per-client label histograms and label statistics for one round.
    Partition {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Variant id when the config defines several.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value_t = 1)]
        round: usize,
        /// Also write every shard as CSV into this directory.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run every configuration of a config or preset.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the biased-client proportion and tabulate success rates.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label variance, KL divergence and the area bound.
    Stats {
        /// Comma separated labels, e.g. `1,5,10`.
        #[arg(long)]
        labels: Option<String>,
        /// File of labels separated by commas or whitespace.
        #[arg(long)]
        labels_file: Option<PathBuf>,
        /// Number of distinct labels for the area bound.
        #[arg(long)]
        tau: Option<u64>,
        /// Distribution p, comma separated.
        #[arg(long)]
        p: Option<String>,
        /// Distribution q, comma separated.
        #[arg(long)]
        q: Option<String>,
        #[arg(long, default_value_t = fedsim::labelstats::DEFAULT_LOG_BASE)]
        log_base: f64,
    },
    /// Rebuild summary.csv and curves.svg from existing run directories.
    Report {
        /// Run directories, or parents of run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Partition {
            cfg,
            variant,
            round,
            dump,
        } => commands::partition(&cfg.source(), variant.as_deref(), round, dump),
        Command::Run { cfg, out } => commands::run(&cfg.source(), out),
        Command::Sweep { cfg, out } => commands::sweep(&cfg.source(), out),
        Command::Stats {
            labels,
            labels_file,
            tau,
            p,
            q,
            log_base,
        } => commands::stats(&commands::StatsArgs {
            labels,
            labels_file,
            tau,
            p,
            q,
            log_base,
        }),
        Command::Report { runs, out } => commands::report(&runs, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
