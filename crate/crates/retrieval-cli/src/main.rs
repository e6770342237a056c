use std::process::ExitCode;

use clap::Parser;
use retrieval_cli::{run, strategies, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(code) => ExitCode::from(code as u8),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Strategies => {
            print!("{}", strategies());
            ExitCode::SUCCESS
        }
    }
}
