use std::process::ExitCode;

use clap::Parser;
use grpboost::ErrorClass;
use grpboost_cli::{report_error, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error(ErrorClass::Config, e.to_string().trim()),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(e.class(), &e.to_string()),
    }
}
