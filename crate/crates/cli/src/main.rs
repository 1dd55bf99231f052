//! `milp-decomp` command-line tool.
//!
//! Exit codes: 0 a feasible solution was produced, 1 error, 2 no feasible
//! solution (horizon exhausted, baseline infeasible, or an infeasible
//! instance), 3 a branch-and-bound node cap tripped.

mod args;
mod commands;
mod error;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_FEASIBLE: i32 = 2;
pub const EXIT_NODE_LIMIT: i32 = 3;

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }
    let parallel = rayon::current_num_threads() > 1;
    match &cli.command {
        Command::Solve(a) => commands::solve(a, parallel),
        Command::Certify(a) => commands::certify(a, parallel),
        Command::Compare(a) => commands::compare(a, parallel),
        Command::Benchmark(a) => commands::benchmark(a, parallel),
        Command::Oracle(a) => commands::oracle(a),
        Command::Generate(a) => commands::generate(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version go to stdout and are not failures.
            std::process::exit(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    std::process::exit(code);
}
