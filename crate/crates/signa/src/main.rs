use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = signa::cli::Cli::parse();
    match signa::commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
