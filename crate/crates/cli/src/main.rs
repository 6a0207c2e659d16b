mod args;
mod commands;
mod exit;
mod simulate;

use std::process::ExitCode;

use args::{Cli, Command};
use clap::error::ErrorKind;
use clap::Parser;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: &Cli) -> anyhow::Result<String> {
    match &cli.command {
        Command::Profile(a) => commands::run_profile(a),
        Command::Split(a) => commands::run_split(a),
        Command::Volumes(a) => commands::run_volumes(a),
        Command::Simulate(a) => simulate::run_simulate(a),
        Command::Catalog(a) => commands::run_catalog(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(exit::BAD_FLAG),
            };
        }
    };
    init_logging(cli.verbose);

    match run(&cli) {
        Ok(text) => {
            if !text.is_empty() {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err))
        }
    }
}
