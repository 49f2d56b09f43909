use std::process::ExitCode;

use clap::Parser;
use plap_sim::cli::{dispatch, Cli};

fn main() -> ExitCode {
    dispatch(Cli::parse())
}
