use std::process::ExitCode;

use clap::Parser;
use ctrace_cli::commands::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
