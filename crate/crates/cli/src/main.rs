use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;
use hcap::{run, Cli, Outcome};

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("HCAP_LOG", "warn")).init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Failure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
