use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

mod commands;
mod report;
mod source;

use commands::{EvalArgs, SampleArgs, SweepArgs};
use report::Run;

#[derive(Parser)]
#[command(name = "cemlab", version, about = "Diffusion-model experiments with analytic oracles")]
struct Cli {
    /// Parent directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw samples with the backward splitting scheme.
    Sample(SampleArgs),
    /// Error curves, singularity profiles and the λ-shape fit.
    Eval(EvalArgs),
    /// Sample once per t1 and compare absorption.
    T1Sweep(SweepArgs),
}

fn execute(cli: &Cli) -> anyhow::Result<PathBuf> {
    match &cli.command {
        Command::Train { config } => match commands::read_config(config) {
            Ok((_, cfg)) => {
                let mut run = Run::create(&cli.out_dir, "train", serde_json::to_value(&cfg)?)?;
                let res = commands::train(&mut run, &cfg);
                run.finish(res)
            }
            Err(e) => {
                let raw = std::fs::read_to_string(config).unwrap_or_default();
                let run = Run::create(&cli.out_dir, "train", json!({ "config_path": config, "raw": raw }))?;
                run.finish(Err(e))
            }
        },
        Command::Sample(args) => {
            let mut run = Run::create(&cli.out_dir, "sample", args.echo())?;
            let res = commands::sample(&mut run, args);
            run.finish(res)
        }
        Command::Eval(args) => {
            let mut run = Run::create(&cli.out_dir, "eval", args.echo())?;
            let res = commands::eval(&mut run, args);
            run.finish(res)
        }
        Command::T1Sweep(args) => {
            let mut run = Run::create(&cli.out_dir, "t1-sweep", args.echo())?;
            let res = commands::t1_sweep(&mut run, args);
            run.finish(res)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            println!("{}", report.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
