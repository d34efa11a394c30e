use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;

use robuststop::cli::{run, Cli};
use robuststop::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("ROBUSTSTOP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) | Error::InvalidInput(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
