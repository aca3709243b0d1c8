//! `latentcache`: trace generation, simulation, policy sweeps and codec
//! round trips.

mod args;
mod codec_cmd;
mod config;
mod error;
mod sim;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::GenTrace(a) => sim::gen_trace(&a),
        Command::Simulate(a) => sim::simulate(&a),
        Command::BenchPolicies(a) => sim::bench_policies(&a),
        Command::Codec(a) => codec_cmd::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
