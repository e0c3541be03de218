use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;

use pwflow_core::schedule::DEFAULT_Y_BATCH;
use pwflow_core::{
    fill_fields, kernel_time, make_grid, run_schedule, AdvectionCoefficients, Extent,
    GeneratorSpec, GridDims, ScheduleSpec, TrafficReport, Variant,
};

use crate::opts::{read_to_string, resolve_extent, Cells, Failure, Grid, OutputArgs, ParamsArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Random,
    Trig,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, conflicts_with = "cells")]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub cells: Option<Cells>,
    /// Schedule to run; repeat for several. Defaults to all four.
    #[arg(long = "schedule", value_name = "NAME")]
    pub schedules: Vec<Variant>,
    #[arg(long, default_value_t = 1)]
    pub engines: usize,
    /// Columns per Y batch [default: min(64, ny)].
    #[arg(long)]
    pub y_batch: Option<usize>,
    #[arg(long, value_enum, default_value_t = Generator::Random)]
    pub generator: Generator,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,
    /// Advection coefficients as JSON `{tcx, tcy, tzc1: [..], tzc2: [..]}`;
    /// every coefficient defaults to 0.25.
    #[arg(long, value_name = "FILE")]
    pub coeffs: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamsArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schedule: Variant,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub engines: usize,
    pub y_batch: usize,
    pub wall_seconds: Vec<f64>,
    pub wall_min_seconds: f64,
    pub wall_mean_seconds: f64,
    pub checksum: String,
    pub traffic: TrafficReport,
    /// Model prediction for the same grid and engine count on the FPGA.
    pub modeled_kernel_seconds: f64,
    pub host: String,
}

/// Flat CSV form of [`RunReport`].
#[derive(Serialize)]
struct RunRow<'a> {
    schedule: Variant,
    nx: usize,
    ny: usize,
    nz: usize,
    engines: usize,
    y_batch: usize,
    reps: usize,
    wall_min_seconds: f64,
    wall_mean_seconds: f64,
    checksum: &'a str,
    external_reads: u64,
    external_writes: u64,
    local_reads: u64,
    local_writes: u64,
    scratch_bytes_peak: u64,
    modeled_kernel_seconds: f64,
    host: &'a str,
}

impl<'a> From<&'a RunReport> for RunRow<'a> {
    fn from(r: &'a RunReport) -> Self {
        RunRow {
            schedule: r.schedule,
            nx: r.nx,
            ny: r.ny,
            nz: r.nz,
            engines: r.engines,
            y_batch: r.y_batch,
            reps: r.wall_seconds.len(),
            wall_min_seconds: r.wall_min_seconds,
            wall_mean_seconds: r.wall_mean_seconds,
            checksum: &r.checksum,
            external_reads: r.traffic.external_reads,
            external_writes: r.traffic.external_writes,
            local_reads: r.traffic.local_reads,
            local_writes: r.traffic.local_writes,
            scratch_bytes_peak: r.traffic.scratch_bytes_peak,
            modeled_kernel_seconds: r.modeled_kernel_seconds,
            host: &r.host,
        }
    }
}

pub fn host_description() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{} {threads} threads",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

fn load_coeffs(path: Option<&PathBuf>, dims: GridDims) -> anyhow::Result<AdvectionCoefficients> {
    let coeffs = match path {
        None => AdvectionCoefficients::uniform(dims.nz(), 0.25),
        Some(p) => serde_json::from_str(&read_to_string(p)?)
            .with_context(|| format!("parsing coefficients in {}", p.display()))?,
    };
    coeffs.validate()?;
    coeffs.check_dims(dims)?;
    Ok(coeffs)
}

/// Runs one schedule `reps` times; timing covers only the schedule call.
pub fn measure(
    fields: &pwflow_core::FieldSet,
    coeffs: &AdvectionCoefficients,
    spec: &ScheduleSpec,
    reps: u32,
) -> anyhow::Result<(Vec<Duration>, pwflow_core::Digest, TrafficReport)> {
    let mut times = Vec::with_capacity(reps as usize);
    let mut first = None;
    for rep in 0..reps {
        let run = run_schedule(fields, coeffs, spec)?;
        let digest = run.sources.digest();
        match first {
            None => first = Some((digest, run.traffic)),
            Some((d, t)) if d != digest || t != run.traffic => {
                return Err(Failure(format!(
                    "{} repetition {rep} diverged: checksum {digest} vs {d}",
                    spec.variant
                ))
                .into());
            }
            Some(_) => {}
        }
        times.push(run.wall_time);
    }
    let (digest, traffic) = first.expect("reps >= 1");
    Ok((times, digest, traffic))
}

pub fn run(args: &BenchArgs) -> anyhow::Result<()> {
    let params = args.params.load()?;
    let extent = resolve_extent(args.grid, args.cells, Extent::new(64, 64, 64));
    let dims = make_grid(extent.nx as usize, extent.ny as usize, extent.nz as usize)?;
    let coeffs = load_coeffs(args.coeffs.as_ref(), dims)?;
    let generator = match args.generator {
        Generator::Random => GeneratorSpec::Random { seed: args.seed },
        Generator::Trig => GeneratorSpec::Trig,
    };
    let fields = fill_fields(dims, generator);
    let y_batch = args.y_batch.unwrap_or(DEFAULT_Y_BATCH.min(dims.ny()));
    let variants = if args.schedules.is_empty() {
        Variant::ALL.to_vec()
    } else {
        args.schedules.clone()
    };
    let modeled = kernel_time(
        &extent,
        &params.pipeline,
        &params.memory,
        &params.kernel,
        args.engines as u64,
    )?;
    let host = host_description();

    let mut reports = Vec::new();
    for variant in variants {
        let spec = ScheduleSpec::new(variant)
            .with_y_batch(y_batch)
            .with_engines(args.engines);
        spec.validate(dims)?;
        let (times, digest, traffic) = measure(&fields, &coeffs, &spec, args.reps)?;
        let secs: Vec<f64> = times.iter().map(Duration::as_secs_f64).collect();
        reports.push(RunReport {
            schedule: variant,
            nx: dims.nx(),
            ny: dims.ny(),
            nz: dims.nz(),
            engines: args.engines,
            y_batch: spec.y_batch,
            wall_min_seconds: secs.iter().copied().fold(f64::INFINITY, f64::min),
            wall_mean_seconds: secs.iter().sum::<f64>() / secs.len() as f64,
            wall_seconds: secs,
            checksum: digest.to_string(),
            traffic,
            modeled_kernel_seconds: modeled,
            host: host.clone(),
        });
    }

    match args.output.format {
        crate::opts::Format::Csv => {
            let rows: Vec<RunRow> = reports.iter().map(RunRow::from).collect();
            args.output.write_rows(&rows)?;
        }
        crate::opts::Format::Json => args.output.write_rows(&reports)?,
    }

    if let Some(odd) = reports.iter().find(|r| r.checksum != reports[0].checksum) {
        return Err(Failure(format!(
            "{} produced checksum {} but {} produced {}",
            odd.schedule, odd.checksum, reports[0].schedule, reports[0].checksum
        ))
        .into());
    }
    Ok(())
}
