//! Command-line front end: file ingestion, descriptor export, invariance audits, Bingham
//! utilities and the mirrored-wing demonstration.

pub mod args;
pub mod commands;
pub mod config;
pub mod io;

use std::fmt;

use args::{Cli, Command};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INVARIANCE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self { code: EXIT_VALIDATION, message: msg.to_string() }
    }

    pub fn invariance(msg: impl fmt::Display) -> Self {
        Self { code: EXIT_INVARIANCE, message: msg.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<shadowpose_core::Error> for CliError {
    fn from(e: shadowpose_core::Error) -> Self {
        use shadowpose_core::Error::*;
        let code = match e {
            Numeric(_) | SamplerStall { .. } => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(format!("i/o error: {e}"))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Features(a) => commands::features(a),
        Command::VerifyInvariance(a) => commands::verify_invariance(a),
        Command::Bingham { op } => commands::bingham(op),
        Command::DemoWingtip(a) => commands::demo_wingtip(a),
        Command::TrainToy(a) => commands::train_toy(a),
    }
}
