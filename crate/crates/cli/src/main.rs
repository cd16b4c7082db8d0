//! `eoslab`: generate data, train, evaluate, analyze and tabulate.

mod analyze;
mod args;
mod context;
mod eval;
mod generate;
mod report;
mod table;
mod train;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use context::{CliError, Ctx};

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(&cli.global)?;
    match cli.command {
        Command::Generate(a) => generate::run(&ctx, a),
        Command::Train(a) => train::run(&ctx, a),
        Command::Eval(a) => eval::run(&ctx, a),
        Command::Analyze(a) => analyze::run(&ctx, a),
        Command::Report(a) => report::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
