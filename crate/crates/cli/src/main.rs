use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use colsplit_cli::{parse_config, run_experiment, run_oracle, run_sweep, CliError};

#[derive(Parser)]
#[command(name = "colsplit", about = "Column-partitioned distributed LASSO / BPDN / BP experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Distributed solve plus oracle comparison.
    Run { config: PathBuf },
    /// Centralized oracle only.
    Oracle { config: PathBuf },
    /// Repeat the run over stage-2 regularization weights.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "alpha")]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.verb {
        Verb::Run { config } => {
            let art = run_experiment(&parse_config(&config)?)?;
            print!("{}", art.summary.render());
            Ok(art.exit_code)
        }
        Verb::Oracle { config } => {
            let art = run_oracle(&parse_config(&config)?)?;
            print!("{}", art.summary.render());
            Ok(art.exit_code)
        }
        Verb::Sweep { config, param, values } => {
            if param != "alpha" {
                return Err(CliError::Validation(format!("only alpha sweeps are supported, got {param}")));
            }
            run_sweep(&parse_config(&config)?, &values)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
