//! Command-line front end: reads a JSON run configuration, builds the model
//! and its Hessian operator, and writes CSV/JSON results for one command.

pub mod check;
pub mod config;
pub mod error;
pub mod job;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use config::RunConfig;
pub use error::CliError;
pub use job::{Cli, Command, JobSpec};

/// Parses arguments, merges them over the config's `job` section and runs.
pub fn execute<I, T>(args: I) -> Result<Vec<PathBuf>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)
        .map_err(|e| CliError::Usage(e.to_string().lines().next().unwrap_or("").to_string()))?;
    let config = RunConfig::load(&cli.config)?;
    let job = cli.job.over(config.job.clone());
    let spec = JobSpec::resolve(cli.command, cli.config, job)?;
    run::run(&spec, &config)
}

/// Runs the tool and returns the process exit code: 0 on success, 1 when the
/// analysis fails, 2 for usage and configuration errors. Errors are reported
/// as a single JSON line on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    // --help and --version print normally
    if let Err(e) = Cli::try_parse_from(&args) {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            print!("{e}");
            return 0;
        }
    }
    match execute(args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}
