use std::process::ExitCode;

use clap::Parser;
use foveate::cli::Cli;
use foveate::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("foveate: {e:#}");
            ExitCode::FAILURE
        }
    }
}
