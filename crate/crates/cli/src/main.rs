use std::process::ExitCode;

use clap::Parser;
use fediron_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match fediron_cli::args::run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
