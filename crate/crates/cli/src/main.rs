use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use seqtag::app::{load_config, run_bench, run_decode, run_train, BenchSettings, RunOptions};

#[derive(Parser)]
#[command(name = "seqtag", version, about = "Neural sequence labeling driven by a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Evaluation and decoding threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Random seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and save the best checkpoint into model_dir.
    Train(Common),
    /// Label raw_dir with the checkpoint in model_dir and write decode_dir.
    Decode(Common),
    /// Measure training and decoding throughput per batch size.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        batch_sizes: Vec<usize>,
        /// Sentences per timed repetition.
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> seqtag::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let common = match &cli.command {
        Command::Train(c) | Command::Decode(c) => c,
        Command::Bench { common, .. } => common,
    };
    let config = load_config(&common.config, &common.overrides, common.seed)?;
    let options = RunOptions {
        workers: common.workers.max(1),
    };
    match &cli.command {
        Command::Train(_) => run_train(&config, options, &mut out).map(drop),
        Command::Decode(_) => run_decode(&config, options, &mut out).map(drop),
        Command::Bench {
            batch_sizes,
            budget,
            repeats,
            ..
        } => run_bench(
            &config,
            batch_sizes,
            BenchSettings {
                budget: *budget,
                repeats: *repeats,
            },
            &mut out,
        )
        .map(drop),
    }?;
    let _ = out.flush();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("usage-error: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
