use std::path::PathBuf;
use std::process::ExitCode;

use cfprox::config::PipelineConfig;
use cfprox::pipeline::Pipeline;
use cfprox::{CliError, Result};
use clap::{Args, Parser, Subcommand};

/// Counterfactual evaluation of recommendation explanations.
#[derive(Parser)]
#[command(name = "cfprox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output root; each configuration gets its own run directory below it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the data files and print dataset counts.
    Ingest(Common),
    /// Sample the synthetic user and train the base model.
    Train(Common),
    /// Score all candidate explanations and write the score report.
    Score(Common),
    /// Write the survey bundle with the selected explanations.
    Generate(Common),
    /// Correlation, MSE and t-test tables for collected ratings.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Ratings CSV: question_id,explanation_id,dimension,participant_id,rating
        #[arg(long)]
        ratings: PathBuf,
    },
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    Pipeline::new(PipelineConfig::load(&common.config)?, &common.out)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(c) => print_json(&pipeline(&c)?.ingest()?),
        Command::Train(c) => println!("{}", pipeline(&c)?.train()?.checkpoint.display()),
        Command::Score(c) => {
            let p = pipeline(&c)?;
            p.score()?;
            println!("{}", p.path(cfprox::pipeline::SCORE_REPORT).display());
        }
        Command::Generate(c) => {
            let p = pipeline(&c)?;
            p.generate()?;
            println!("{}", p.path(cfprox::pipeline::BUNDLE).display());
        }
        Command::Analyze { common, ratings } => {
            println!("{}", pipeline(&common)?.analyze(&ratings)?.dir.display())
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
