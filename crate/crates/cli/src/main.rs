use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use cosparse_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            if let CliError::Usage { command, .. } = e {
                if let Some(sub) = Cli::command().find_subcommand_mut(command) {
                    let mut sub = sub.clone().bin_name(format!("cosparse {command}"));
                    eprintln!("\n{}", sub.render_usage());
                }
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}
