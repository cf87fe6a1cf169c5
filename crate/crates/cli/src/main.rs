use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = leaky_decoy_cli::Args::parse();
    match leaky_decoy_cli::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("leaky-decoy: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
