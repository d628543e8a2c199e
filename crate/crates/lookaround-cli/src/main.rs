//! `lookaround`: generate view-grid worlds, train the observation-completion
//! model and its look-around policy, evaluate against baselines, transfer
//! the policy to recognition, and render episodes.

mod args;
mod errors;
mod manifest;
mod montage;
mod run;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::errors::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; only real parse
            // errors take the usage exit code.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Gen(args) => run::gen(args),
        Command::Pretrain(args) => run::pretrain(args),
        Command::Train(args) => run::train(args),
        Command::Eval(args) => run::eval(args),
        Command::Transfer(args) => run::transfer(args),
        Command::Dump(args) => run::dump(args),
    }
}
