//! The `aidetect` command line. [`run`] parses arguments, executes one
//! subcommand and maps the outcome to an exit code.

pub mod args;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use aidetect_core::CoreError;
use aidetect_nn::NnError;
use clap::Parser;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// An I/O failure anywhere in the cause chain makes this an I/O error;
/// everything else is a validation error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            if e.is_io() {
                return EXIT_IO;
            }
        }
        if let Some(NnError::Io(_)) = cause.downcast_ref::<NnError>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

/// Run one invocation, writing normal output to `stdout`.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::merge(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    run_with(argv, &mut std::io::stdout().lock())
}
