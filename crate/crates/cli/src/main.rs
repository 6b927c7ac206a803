mod args;
mod commands;
mod failure;
mod manifest;
mod report;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "CFC_THREADS";

/// Worker stack size; tree growth and traversal recurse once per level.
const STACK_BYTES: usize = 64 << 20;

fn thread_count() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => Ok(n),
            Err(_) => Err(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            )),
        },
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(failure::USAGE);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .stack_size(STACK_BYTES)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(failure::INTERNAL);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            failure::exit_code(&e)
        }
    }
}
