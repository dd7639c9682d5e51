use std::process::ExitCode;

use clap::Parser;
use robust_miso::cli::{configure_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            if outcome.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "error: {} grid point(s) failed to solve; see the log file or pass --allow-failures",
                    outcome.failures
                );
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
