//! Command-line front end: corpus synthesis, spectrogram caching, training
//! grids, evaluation, prediction and parameter counts.

mod args;
pub mod commands;
pub mod config;
mod error;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};
pub use config::FileConfig;
pub use error::{CliError, Result, EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE};

pub fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => commands::synth(a, &file),
        Command::Preprocess(a) => commands::preprocess(a, &file),
        Command::Train(a) => commands::train(a, &file),
        Command::Evaluate(a) => commands::evaluate_cmd(a, &file),
        Command::Predict(a) => commands::predict(a, &file),
        Command::Params(a) => {
            println!("{}", commands::params(a, &file)?);
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
