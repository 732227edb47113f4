use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use wavetrap_cli::{experiments, CliError, Command, ExperimentConfig, Settings};

/// Run a wavetrap experiment. Exit status: 0 pass, 1 check failure,
/// 2 usage error, 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "wavetrap", version)]
struct Args {
    command: Command,
    /// Settings as key=value; lists are comma separated.
    settings: Vec<String>,
    /// TOML file with the same keys; command-line values take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build(args: &Args) -> Result<ExperimentConfig, CliError> {
    let cli = Settings::from_pairs(&args.settings)?;
    let settings = match &args.config {
        Some(path) => Settings::from_file(path)?.merged(cli),
        None => cli,
    };
    ExperimentConfig::new(args.command, settings)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = build(&args).and_then(|cfg| experiments::run(&cfg));
    match outcome {
        Ok(report) => {
            print!("{}", report.render());
            ExitCode::from(if report.passed() { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
