use std::process::ExitCode;

use clap::Parser;
use sps_cli::Cli;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match sps_cli::run::run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sps: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
