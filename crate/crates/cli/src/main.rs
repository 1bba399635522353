mod commands;
mod config;
mod experiment;
mod prepare;
mod runs;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use mutualctr::data::SplitPart;

use crate::config::{ExperimentConfig, Overrides};
use crate::runs::Workers;

#[derive(Parser)]
#[command(name = "mutualctr", version, about = "Mutual learning for CTR prediction models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config, TOML or JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides training.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs and cohort steps.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Overrides training.epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides training.lambda.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Reads and splits the dataset and caches the encoded examples.
    Prepare(Common),
    /// Runs the [training] block.
    Train(Common),
    /// Runs one research-question preset and writes its table.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        rq: u8,
    },
    /// Scores a checkpoint on one part of the prepared split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitPart,
    },
    /// Tabulates every report in the output directory.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Prepare(c) | Command::Train(c) | Command::Report(c) => c,
            Command::Experiment { common, .. } | Command::Eval { common, .. } => common,
        }
    }
}

fn setup(common: &Common) -> Result<(ExperimentConfig, Workers)> {
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        epochs: common.epochs,
        lambda: common.lambda,
    };
    let cfg = ExperimentConfig::load(&common.config, &overrides)?;
    fs::create_dir_all(&cfg.output.dir).with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let json = cfg.to_json()?;
    fs::write(cfg.output.dir.join("effective-config.json"), &json)?;
    info!("effective config:\n{json}");
    Ok((cfg, Workers::new(common.parallel)?))
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, workers) = setup(cli.command.common())?;
    match &cli.command {
        Command::Prepare(_) => {
            let m = prepare::cmd_prepare(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Train(_) => {
            for p in commands::cmd_train(&cfg, &workers)? {
                println!("{}", p.display());
            }
        }
        Command::Experiment { rq, .. } => {
            let table = experiment::cmd_experiment(&cfg, *rq, &workers)?;
            print!("{}", table.to_text());
        }
        Command::Eval { checkpoint, split, .. } => {
            let m = commands::cmd_eval(&cfg, checkpoint, *split)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Report(_) => {
            print!("{}", commands::cmd_report(&cfg)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MUTUALCTR_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
