mod commands;
mod opts;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;
use locality_rd::{Error, ErrorClass};

use crate::opts::{Cli, Command};
use crate::pipeline::Output;

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn run(cli: &Cli) -> Result<commands::Report, Error> {
    let out = Output::new(&cli.out)?;
    match &cli.command {
        Command::Estimate(a) => commands::estimate(a, &out),
        Command::Aggregate(a) => commands::aggregate(a, &out),
        Command::Variance(a) => commands::variance(a, &out),
        Command::Shrink(a) => commands::shrink(a, &out),
        Command::Forecast(a) => commands::forecast(a, &out),
        Command::Correlate(a) => commands::correlate(a, &out),
        Command::Decompose(a) => commands::decompose(a, &out),
        Command::Binscatter(a) => commands::binscatter_cmd(a, &out),
        Command::Simulate(a) => commands::simulate(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(r) => {
            if r.warnings > 0 {
                eprintln!("completed with {} warning(s)", r.warnings);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
