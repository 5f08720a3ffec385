use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nnqf::dataprep::parse_timestamp;
use nnqf::synth::{Generator, SyntheticSpec};
use nnqf_cli::commands::{cmd_bench, cmd_evaluate, cmd_forecast, cmd_ingest, cmd_synth, cmd_train, Span};
use nnqf_cli::config::RunConfig;
use nnqf_cli::{CliError, CliResult};

/// Probabilistic forecasts with the nearest neighbors quantile filter.
#[derive(Parser)]
#[command(name = "nnqf", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory (a file for `forecast`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate source CSVs and write the canonical store.
    Ingest,
    /// Generate a synthetic store with a matching config.
    Synth {
        /// `heteroscedastic-linear` or `household-load-like`.
        #[arg(long, default_value = "heteroscedastic-linear")]
        generator: Generator,
        /// Number of hourly steps.
        #[arg(long, default_value_t = 10_000)]
        length: usize,
        /// Share of the steps used for training.
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
    },
    /// Fit every configured model and write model containers.
    Train {
        /// Only this task; every configured task otherwise.
        #[arg(long)]
        task: Option<u32>,
    },
    /// Apply one stored model to a span of a series.
    Forecast {
        /// Model container written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Series to forecast; the first in the store by default.
        #[arg(long)]
        series: Option<String>,
        /// Forecast the test span of this task.
        #[arg(long, conflicts_with_all = ["start", "end"])]
        task: Option<u32>,
        /// First target timestamp.
        #[arg(long, requires = "end")]
        start: Option<String>,
        /// Target timestamp one past the last.
        #[arg(long, requires = "start")]
        end: Option<String>,
    },
    /// Train, forecast and score every task; write report tables.
    Evaluate {
        /// Only this task; every configured task otherwise.
        #[arg(long)]
        task: Option<u32>,
    },
    /// Sweep training-set fractions and record filter, fit and application costs.
    Bench {
        /// Series to study; the first in the store by default.
        #[arg(long)]
        series: Option<String>,
        /// Task window to study; the first configured task by default.
        #[arg(long)]
        task: Option<u32>,
    },
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn timestamp(s: &str) -> CliResult<i64> {
    parse_timestamp(s)
        .map(|(t, _)| t)
        .ok_or_else(|| CliError::config(format!("cannot parse timestamp `{s}`")))
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth { generator, length, train_fraction } => {
            let spec = SyntheticSpec {
                length: *length,
                generator: *generator,
                seed: cli.seed.unwrap_or(0),
                train_fraction: *train_fraction,
            };
            let out = out_dir(cli, "synthetic");
            cmd_synth(&spec, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Ingest => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.store.clone());
            let m = cmd_ingest(&cfg, &out)?;
            eprintln!("stored {} series in {}", m.series.len(), out.display());
        }
        Command::Train { task } => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, "run");
            let index = cmd_train(&cfg, &out, *task)?;
            eprintln!("wrote {} model containers under {}", index.entries.len(), out.display());
        }
        Command::Forecast { model, series, task, start, end } => {
            let cfg = load_config(cli)?;
            let span = match (task, start, end) {
                (Some(t), _, _) => Span::Task(*t),
                (None, Some(a), Some(b)) => Span::Between(timestamp(a)?, timestamp(b)?),
                _ => Span::All,
            };
            let out = out_dir(cli, "forecast.csv");
            let rows = cmd_forecast(&cfg, model, series.as_deref(), &span, &out)?;
            eprintln!("wrote {rows} rows to {}", out.display());
        }
        Command::Evaluate { task } => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, "report");
            let report = cmd_evaluate(&cfg, &out, *task)?;
            for a in report.aggregate() {
                let skill = a.skill.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
                println!("{:<14} Q_PL {:.4}%  skill {skill}", a.model, a.q_pl * 100.0);
            }
        }
        Command::Bench { series, task } => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, "bench");
            for r in cmd_bench(&cfg, &out, series.as_deref(), *task)? {
                println!(
                    "{:>5.2} rows {:>6}  nnqf apply {:.3e}s  knnqr apply {:.3e}s  visits {}",
                    r.fraction, r.train_rows, r.nnqf_apply_seconds, r.knnqr_apply_seconds, r.knnqr_visits
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = nnqf::par::with_jobs(cli.jobs, || run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

