use std::io::Write as _;
use std::process::ExitCode;

use clap::Parser;

use mico_cli::cli::Cli;
use mico_cli::commands;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match commands::run(&cli) {
        Ok(outcome) => {
            for path in &outcome.written {
                log::info!("wrote {}", path.display());
            }
            let summary = serde_json::to_string_pretty(&outcome).expect("summary serializes");
            // A closed pipe downstream is not an error of ours.
            let _ = writeln!(std::io::stdout().lock(), "{summary}");
            match outcome.failure {
                Some(e) => {
                    eprintln!("error: {e}");
                    e.to_exit_code()
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.to_exit_code()
        }
    }
}
