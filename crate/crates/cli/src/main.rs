mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use deltascope::{Error, ErrorKind};

use args::{Cli, Command};

fn threads(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("DELTASCOPE_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("DELTASCOPE_THREADS must be a count, got {v:?}"))),
        _ => Ok(None),
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Merge(a) => commands::merge(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Score(a) => commands::score(a),
        Command::Toytrain(a) => commands::toytrain(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Shape => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
