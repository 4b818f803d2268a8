use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hashrec::experiment::{Experiment, ExperimentConfig};
use hashrec::{Error, Result};

/// Hashing-based recommenders: train, encode to binary codes, evaluate.
#[derive(Debug, Parser)]
#[command(name = "hashrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid cells processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only process grid cells whose name contains this string.
    #[arg(long, global = true)]
    only: Option<String>,
    /// Suppress per-cell progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, filter, subsample and split the data; print dataset stats.
    Prepare,
    /// Train every grid cell and write checkpoints.
    Train,
    /// Write binary or continuous codes for every variant.
    Encode,
    /// Score every variant and baseline; write metrics CSVs.
    Evaluate,
    /// Aggregate metrics into a models x (code length, k) table.
    Report,
    /// Compare continuous (ST) and sign (SST) codes of tanh-trained models.
    Gapstudy,
    /// χ² analysis of the users one variant serves better than another.
    Groups,
}

fn experiment(cli: &Cli) -> Result<Experiment> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <FILE> is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    let mut exp = Experiment::new(config)?
        .with_jobs(cli.jobs)
        .with_only(cli.only.clone());
    exp.verbose = !cli.quiet;
    Ok(exp)
}

fn run(cli: &Cli) -> Result<()> {
    let exp = experiment(cli)?;
    match cli.command {
        Command::Prepare => println!("{}", exp.prepare()?),
        Command::Train => {
            for p in exp.train()? {
                println!("{}", p.display());
            }
        }
        Command::Encode => {
            for p in exp.encode()? {
                println!("{}", p.display());
            }
        }
        Command::Evaluate => {
            let k = exp.config.eval.ks.iter().copied().max().unwrap_or(10);
            for r in exp.evaluate()? {
                let bits = if r.code_bits == 0 {
                    String::new()
                } else {
                    format!(" r={}", r.code_bits)
                };
                println!(
                    "{}{bits}  NDCG@{k} {:.4}  Recall@{k} {:.4}  users {}",
                    r.label(),
                    r.ndcg_at(k).unwrap_or(f64::NAN),
                    r.recall_at(k).unwrap_or(f64::NAN),
                    r.per_user.len()
                );
            }
        }
        Command::Report => print!("{}", exp.report()?.to_text()),
        Command::Gapstudy => print!("{}", exp.gapstudy()?.to_csv(None)),
        Command::Groups => {
            let report = exp.groups()?;
            if let Some(n) = &report.notice {
                println!("# {n}");
            }
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}
