use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppd_cli::config::Command;
use ppd_cli::run::{run_file, RunOptions};

/// Power prior analysis and Bayesian sample-size determination.
#[derive(Parser)]
#[command(name = "ppd", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Posterior summaries for the current data.
    Analyze(Common),
    /// Power or type I error by simulation.
    Design(Common),
    /// Fit the normalizing-constant surface for random a0.
    Normconst(Common),
    /// Smallest sample size meeting the error targets.
    FindN(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output: Option<String>,
    /// Recode responses so that the success direction is reversed.
    #[arg(long)]
    flip_responses: bool,
    /// No progress output; warnings only.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Analyze(a) => (Command::Analyze, a),
        Sub::Design(a) => (Command::Design, a),
        Sub::Normconst(a) => (Command::Normconst, a),
        Sub::FindN(a) => (Command::FindN, a),
    };
    let level = if args.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let options = RunOptions {
        seed: args.seed,
        workers: args.workers,
        output: args.output,
        flip_responses: args.flip_responses,
        quiet: args.quiet,
    };
    match run_file(&args.config, Some(command), &options) {
        Ok(report) => {
            match &report.config.output {
                Some(path) => {
                    if !args.quiet {
                        println!("{} finished in {:.2}s; report written to {path}", report.command, report.timings.total_seconds);
                    }
                }
                None => println!("{}", report.to_json()),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("error report serializes"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
