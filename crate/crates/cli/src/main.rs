use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = gencls_cli::Cli::parse();
    match gencls_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(gencls_cli::exit_code(&e))
        }
    }
}
