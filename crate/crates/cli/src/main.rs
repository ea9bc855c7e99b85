mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::Exit;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCALESYM_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default usage code collides with the non-convergence code
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Exit::Success,
                _ => Exit::Input,
            };
            let _ = e.print();
            return code.into();
        }
    };

    let result = match &cli.command {
        Command::SolveCc(a) => commands::solve_cc(a),
        Command::Verify(a) => commands::verify(a),
        Command::Integrate(a) => commands::integrate(a),
        Command::Homothetic(a) => commands::homothetic(a),
    };
    match result {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("scalesym: {e}");
            e.exit().into()
        }
    }
}
