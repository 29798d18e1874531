mod args;
mod commands;
mod input;

use std::process::ExitCode;

use clap::Parser;

use args::{header, Cli, Command};
use commands::Outcome;

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match dispatch(&cli.command) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: &Command) -> anyhow::Result<Outcome> {
    let jobs = rayon::current_num_threads();
    if let Command::Experiment(a) = command {
        let cfg = commands::resolve_experiment(a)?;
        println!("{}", header(command.name(), &args::experiment_flags(&cfg), jobs));
        return commands::experiment(&cfg);
    }
    println!("{}", header(command.name(), &command.flags(), jobs));
    match command {
        Command::Sum(a) => commands::sum(a),
        Command::Verify(a) => commands::verify(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Coverage(a) => commands::coverage(a),
        Command::Experiment(_) => unreachable!(),
    }
}
