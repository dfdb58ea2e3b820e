mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::Cli;
use commands::Failure;

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("EVCORE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("EVCORE_THREADS must be a non-negative integer, got '{raw}'"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(argv: Vec<OsString>) -> Result<(), Failure> {
    let mut cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    cmd.build();
    let argv = config::merge_config(&cmd, argv).map_err(|e| Failure::Config(e.0))?;
    let matches = match cmd.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(Failure::Reported) };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Config(e.to_string()))?;
    configure_threads().map_err(Failure::Config)?;
    commands::run(cli.command)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Reported => {}
            }
            ExitCode::from(f.exit_code())
        }
    }
}
