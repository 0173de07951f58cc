//! Command-line front end: `run`, `sweep`, `validate` and `export`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use d2d_bandit::config::{preset, StrategySpec, SystemConfig, PRESETS};
use d2d_bandit::harness::{self, HarnessError};

#[derive(Parser)]
#[command(name = "d2d-bandit", version, about = "Calibrated-forecasting bandit game for D2D channel selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset: k2m2, k4m4-ortho, k4m4-nonortho, forecaster-only.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<SystemConfig, HarnessError> {
        match (&self.config, &self.preset) {
            (Some(path), _) => Ok(SystemConfig::load(path)?),
            (None, Some(name)) => Ok(preset(name)?),
            (None, None) => Ok(preset("k2m2")?),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Play one run and write its trace and metrics.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated metric horizons (overrides the config).
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<u64>>,
        /// Trials to play (overrides the config).
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Run several seeds and strategies and aggregate throughput.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Comma-separated strategies, each played by every player
        /// (default: the config's own assignment under its first label).
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<u64>>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Check a config and print schedule, reward bound and problem sizes.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Recompute metric files from a trace CSV.
    Export {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset as TOML.
    Preset { name: String },
}

fn apply_overrides(cfg: &mut SystemConfig, seed: Option<u64>, checkpoints: Option<Vec<u64>>, trials: Option<u64>) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(c) = checkpoints {
        cfg.output.checkpoints = c;
    }
    if let Some(n) = trials {
        cfg.horizon = d2d_bandit::config::Horizon::Trials(n);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode, HarnessError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { source, seed, out, checkpoints, trials } => {
            let mut cfg = source.load()?;
            apply_overrides(&mut cfg, seed, checkpoints, trials);
            cfg.validate()?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            if cfg.synthetic.is_some() {
                let (run, _) = harness::execute_synthetic(&cfg, &dir)?;
                let max_r = run.periods.iter().map(|p| p.r).max().unwrap_or(0);
                log::info!("{} trials, {} periods ended, {} resets, highest period {max_r}", run.steps.len(), run.periods.len(), run.resets);
            } else {
                let oracle = harness::build_oracle(&cfg)?;
                let run = harness::execute_game(&cfg, &oracle, &dir)?;
                log::info!(
                    "{} trials; final S {:?}; CE distance {:?}; aggregate throughput {:?}",
                    run.summary.trials,
                    run.summary.final_consistency,
                    run.summary.final_ce_distance,
                    run.summary.final_aggregate_throughput
                );
            }
            println!("{}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { source, seeds, strategies, out, checkpoints, trials } => {
            let mut cfg = source.load()?;
            apply_overrides(&mut cfg, None, checkpoints, trials);
            cfg.validate()?;
            let specs: Vec<StrategySpec> = match strategies {
                Some(names) => names
                    .iter()
                    .map(|n| {
                        StrategySpec::from_label(n).ok_or_else(|| d2d_bandit::config::ConfigError::Invalid {
                            field: "--strategies".into(),
                            reason: format!("unknown strategy `{n}`"),
                        })
                    })
                    .collect::<Result<_, _>>()?,
                None => vec![cfg.players.first().copied().unwrap_or(StrategySpec::Cb)],
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let result = harness::sweep(&cfg, &specs, &seeds, &dir)?;
            for row in result.aggregate.iter().filter(|r| r.t == cfg.trials()) {
                println!("{:>4} T={} aggregate throughput {:.4} ± {:.4} ({} runs)", row.strategy, row.t, row.mean, row.sd, row.runs);
            }
            for (s, seed, e) in &result.failures {
                eprintln!("failed: {s} seed {seed}: {e}");
            }
            Ok(if result.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Validate { source } => {
            let cfg = source.load()?;
            let report = harness::validation_report(&cfg);
            for l in &report.lines {
                println!("{l}");
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { source, trace, out } => {
            let cfg = source.load()?;
            harness::export(&cfg, &trace, &out)?;
            println!("{}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name } => {
            if !PRESETS.contains(&name.as_str()) {
                return Err(d2d_bandit::config::ConfigError::UnknownPreset(name).into());
            }
            print!("{}", preset(&name)?.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}
