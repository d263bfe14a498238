use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use lstm_nudge_cli::sweep::{run_sweep, write_report};
use lstm_nudge_cli::{run_pipeline, run_stage, ConfigFile, ExperimentConfig, Stage};

#[derive(Parser)]
#[command(version, about = "Reduced-order Burgers twin experiments with LSTM nudging")]
struct Cli {
    /// Experiment config (TOML); built-in base case when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Random seed (overrides `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline, computing or reusing every stage
    Run {
        /// Stop after this stage
        #[arg(long, value_enum, default_value = "assimilate")]
        stage: Stage,
    },
    /// Solve the full-order model and store snapshots
    Fom,
    /// Build the POD basis and Galerkin operators
    Pod,
    /// Generate the training ensemble and fit the network
    Train,
    /// Run background and nudged reduced models against the truth
    Assimilate {
        /// Use this network checkpoint instead of the cached one
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Expand the [sweep] table and run every combination
    Sweep,
    /// Aggregate the runs under a directory into one table
    Report {
        /// Directory holding the runs (defaults to the output directory)
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<(ConfigFile, ExperimentConfig)> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::parse("")?,
    };
    let mut cfg = file.experiment()?;
    if let Some(out) = &cli.output {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok((file, cfg))
}

fn run(cli: Cli) -> Result<()> {
    let (file, cfg) = load(&cli)?;
    let report = match cli.command {
        Command::Run { stage } => run_pipeline(&cfg, stage)?,
        Command::Fom => run_stage(&cfg, Stage::Fom, None)?,
        Command::Pod => run_stage(&cfg, Stage::Pod, None)?,
        Command::Train => run_stage(&cfg, Stage::Train, None)?,
        Command::Assimilate { checkpoint } => {
            run_stage(&cfg, Stage::Assimilate, checkpoint.as_deref())?
        }
        Command::Sweep => {
            let reports = run_sweep(&file, &cfg)?;
            println!(
                "{} runs; table in {}",
                reports.len(),
                cfg.output_dir.join(lstm_nudge_cli::sweep::REPORT_FILE).display()
            );
            return Ok(());
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or(cfg.output_dir);
            let path = write_report(&dir)?;
            print!("{}", std::fs::read_to_string(&path)?);
            return Ok(());
        }
    };
    println!("{}", toml::to_string(&report.summary)?.trim_end());
    println!("report: {}", cfg.output_dir.join("report.toml").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
