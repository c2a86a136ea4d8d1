mod args;
mod commands;
mod output;

use std::io;
use std::process::ExitCode;

use clap::Parser;
use mlforge_core::dataset::DatasetError;
use mlforge_core::info::InfoError;
use mlforge_core::zoo::ZooError;

use crate::output::{Findings, Usage};

const VALIDATION: u8 = 1;
const USAGE: u8 = 2;
const IO: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if cause.is::<Findings>() {
            return VALIDATION;
        }
        let io = cause.is::<io::Error>()
            || matches!(cause.downcast_ref(), Some(DatasetError::Io(_)))
            || matches!(cause.downcast_ref(), Some(InfoError::Io(_)))
            || matches!(cause.downcast_ref(), Some(ZooError::Io(_)));
        if io {
            return IO;
        }
    }
    VALIDATION
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        // Prints help or the synopsis; usage errors exit 2.
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
