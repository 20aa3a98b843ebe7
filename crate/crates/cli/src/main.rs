//! `sketch-sfa`: synthetic data, exact and sampling-based slow feature
//! analysis, verification suites and benchmark sweeps.

mod bench;
mod cli;
mod config;
mod data;
mod error;
mod manifest;
mod replay;
mod run;
mod verify;

use std::process::ExitCode;

use error::CliError;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = init_threads().and_then(|()| cli::execute(&args));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Help(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SKETCH_SFA_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("SKETCH_SFA_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}
