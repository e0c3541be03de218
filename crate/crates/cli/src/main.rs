//! `pwflow`: run the advection schedules on the host and query the FPGA
//! dataflow and DMA models.
//!
//! Exit status is 0 on success, 1 when a validation check or checksum
//! comparison fails, and 2 for usage or configuration errors.

mod bench;
mod model;
mod opts;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::opts::Failure;

#[derive(Parser, Debug)]
#[command(name = "pwflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time schedules on this host and report checksums and memory traffic.
    Bench(bench::BenchArgs),
    /// Predict kernel, DMA and total time for one grid and engine count.
    Model(model::ModelArgs),
    /// Tabulate the model over grids and engine counts.
    Sweep(model::SweepArgs),
    /// Fit SDRAM bandwidth and contention to measured kernel times.
    Calibrate(model::CalibrateArgs),
    /// Check the model against every published identity.
    Validate(model::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bench(a) => bench::run(a),
        Command::Model(a) => model::run_model(a),
        Command::Sweep(a) => model::run_sweep(a),
        Command::Calibrate(a) => model::run_calibrate(a),
        Command::Validate(a) => model::run_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pwflow: {e:#}");
            if e.is::<Failure>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
