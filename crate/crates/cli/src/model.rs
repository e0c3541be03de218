use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

use pwflow_core::model::ladder_steps;
use pwflow_core::reference::{published_for, KERNEL_LADDER, LADDER_GRID};
use pwflow_core::validation::anchor_observations;
use pwflow_core::{
    calibrate, end_to_end, fill_fields, make_grid, run_checks, AdvectionCoefficients, Extent,
    GeneratorSpec, ModelParams, ModelReport, Observation, ScheduleSpec, SystemModel, Variant,
};

use crate::bench::measure;
use crate::opts::{
    read_to_string, resolve_extent, Cells, EngineList, Failure, Format, Grid, OutputArgs,
    ParamsArgs,
};

/// One modelled point. Column order is frozen for plot scripts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelRow {
    pub nx: u64,
    pub ny: u64,
    pub nz: u64,
    pub cells: u64,
    pub engines: u64,
    pub kernel_seconds: f64,
    pub dma_seconds: f64,
    pub total_seconds: f64,
    pub gflops_kernel: f64,
    pub gflops_total: f64,
    pub dma_fraction: f64,
    /// Host wall time of the measured schedule, with `--measure`.
    pub measured_seconds: Option<f64>,
    /// Published values for this point as `metric=value`, `;`-separated.
    pub reference: String,
    pub citation: String,
}

impl ModelRow {
    pub fn new(r: &ModelReport, measured_seconds: Option<f64>) -> Self {
        let extent = Extent::new(r.nx, r.ny, r.nz);
        let published = published_for(&extent, r.engines);
        let join = |f: &dyn Fn(&pwflow_core::reference::PublishedValue) -> String| {
            published.iter().map(f).collect::<Vec<_>>().join(";")
        };
        ModelRow {
            nx: r.nx,
            ny: r.ny,
            nz: r.nz,
            cells: r.cells,
            engines: r.engines,
            kernel_seconds: r.kernel_seconds,
            dma_seconds: r.dma_seconds,
            total_seconds: r.total_seconds,
            gflops_kernel: r.gflops_kernel,
            gflops_total: r.gflops_total,
            dma_fraction: r.dma_fraction,
            measured_seconds,
            reference: join(&|p| format!("{}={}", p.metric, p.value)),
            citation: join(&|p| p.citation.to_string()),
        }
    }
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long, conflicts_with = "cells")]
    pub grid: Option<Grid>,
    /// Total cells, factorised into 64-level columns on a near-square footprint.
    #[arg(long)]
    pub cells: Option<Cells>,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
    pub engines: u64,
    #[command(flatten)]
    pub params: ParamsArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn run_model(args: &ModelArgs) -> anyhow::Result<()> {
    let params = args.params.load()?;
    let extent = resolve_extent(args.grid, args.cells, Extent::new(512, 512, 64));
    let report = end_to_end(&extent, args.engines, &params.system())?;
    args.output.write_rows(&[ModelRow::new(&report, None)])
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Grid to sweep over; repeatable.
    #[arg(long = "grid", value_name = "NXxNYxNZ")]
    pub grids: Vec<Grid>,
    /// Cell count to sweep over; repeatable.
    #[arg(long = "cells", value_name = "N")]
    pub cells: Vec<Cells>,
    /// Engine counts: `12`, `1,2,4` or `1..12`.
    #[arg(long, default_value = "1..12")]
    pub engines: EngineList,
    /// Also time a schedule on the host at every point.
    #[arg(long)]
    pub measure: bool,
    /// Schedule used by `--measure`.
    #[arg(long, default_value = "xreordered")]
    pub schedule: Variant,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,
    /// Emit the optimisation ladder (modelled vs published) instead.
    #[arg(long, conflicts_with_all = ["grids", "cells", "measure"])]
    pub ladder: bool,
    #[command(flatten)]
    pub params: ParamsArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn measured_seconds(extent: &Extent, engines: u64, args: &SweepArgs) -> anyhow::Result<f64> {
    let dims = make_grid(extent.nx as usize, extent.ny as usize, extent.nz as usize)?;
    let fields = fill_fields(dims, GeneratorSpec::Random { seed: args.seed });
    let coeffs = AdvectionCoefficients::uniform(dims.nz(), 0.25);
    let spec = ScheduleSpec::new(args.schedule)
        .with_y_batch(64.min(dims.ny()))
        .with_engines((engines as usize).min(dims.nx()));
    let (times, _, _) = measure(&fields, &coeffs, &spec, args.reps)?;
    Ok(times
        .iter()
        .map(|t| t.as_secs_f64())
        .fold(f64::INFINITY, f64::min))
}

pub fn sweep_rows(
    extents: &[Extent],
    engines: &[u64],
    system: &SystemModel,
    mut measured: impl FnMut(&Extent, u64) -> anyhow::Result<Option<f64>>,
) -> anyhow::Result<Vec<ModelRow>> {
    let mut rows = Vec::with_capacity(extents.len() * engines.len());
    for extent in extents {
        for &e in engines {
            let report = end_to_end(extent, e, system)?;
            rows.push(ModelRow::new(&report, measured(extent, e)?));
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct LadderOut {
    row: u32,
    label: &'static str,
    depth: u64,
    ii: u64,
    clock_hz: f64,
    y_batch: u64,
    arrays_per_xstep: u64,
    modeled_seconds: f64,
    published_seconds: f64,
    citation: &'static str,
}

fn ladder_rows(params: &ModelParams) -> Vec<LadderOut> {
    let (nx, ny, nz) = LADDER_GRID;
    let extent = Extent::new(nx, ny, nz);
    ladder_steps(
        &params.ladder,
        &params.pipeline,
        &params.memory,
        &params.kernel,
    )
    .into_iter()
    .map(|s| {
        let published = &KERNEL_LADDER[s.row as usize - 1];
        LadderOut {
            row: s.row,
            label: s.label,
            depth: s.pipeline.depth,
            ii: s.pipeline.ii,
            clock_hz: s.pipeline.clock_hz,
            y_batch: s.y_batch,
            arrays_per_xstep: s.arrays_per_xstep,
            modeled_seconds: s.time(&extent, &params.memory),
            published_seconds: published.runtime_ms / 1e3,
            citation: published.citation,
        }
    })
    .collect()
}

pub fn run_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let params = args.params.load()?;
    if args.ladder {
        return args.output.write_rows(&ladder_rows(&params));
    }
    let mut extents: Vec<Extent> = args.grids.iter().map(|g| g.0).collect();
    extents.extend(args.cells.iter().map(|c| Extent::from_cells(c.0)));
    if extents.is_empty() {
        extents.push(Extent::new(1012, 1024, 64));
    }
    let rows = sweep_rows(&extents, &args.engines.0, &params.system(), |e, n| {
        if args.measure && !e.is_empty() {
            measured_seconds(e, n, args).map(Some)
        } else {
            Ok(None)
        }
    })?;
    args.output.write_rows(&rows)
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// CSV with columns `nx,ny,nz,engines,seconds`. Defaults to the two
    /// published kernel times.
    #[arg(long, value_name = "FILE")]
    pub observations: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamsArgs,
    /// Write the calibrated parameter file here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// `json` prints the fitted memory model and residuals instead of TOML.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Deserialize)]
struct ObservationRow {
    nx: u64,
    ny: u64,
    nz: u64,
    engines: u64,
    seconds: f64,
}

fn read_observations(path: &Path) -> anyhow::Result<Vec<Observation>> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize::<ObservationRow>()
        .map(|row| {
            let r = row.with_context(|| format!("reading {}", path.display()))?;
            Ok(Observation {
                extent: Extent::new(r.nx, r.ny, r.nz),
                engines: r.engines,
                seconds: r.seconds,
            })
        })
        .collect()
}

pub fn run_calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let mut params = args.params.load()?;
    let observations = match &args.observations {
        Some(path) => read_observations(path)?,
        None => anchor_observations(&params).to_vec(),
    };
    let fit = calibrate(
        &observations,
        &params.pipeline,
        &params.memory,
        &params.kernel,
    )?;
    params.memory = fit.memory;
    let output = OutputArgs {
        out: args.out.clone(),
        format: args.format.unwrap_or(Format::Csv),
    };
    let text = match args.format {
        Some(Format::Json) => serde_json::to_string_pretty(&fit)? + "\n",
        Some(Format::Csv) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["nx", "ny", "nz", "engines", "seconds", "relative_residual"])?;
            for (o, r) in observations.iter().zip(&fit.relative_residuals) {
                w.write_record([
                    o.extent.nx.to_string(),
                    o.extent.ny.to_string(),
                    o.extent.nz.to_string(),
                    o.engines.to_string(),
                    o.seconds.to_string(),
                    r.to_string(),
                ])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
        None => {
            let mut text = String::from("# Calibrated against:\n");
            for (o, r) in observations.iter().zip(&fit.relative_residuals) {
                text += &format!(
                    "#   {} x{} engines {} s, residual {:+.3e}\n",
                    o.extent, o.engines, o.seconds, r
                );
            }
            text + &params.to_toml_string()
        }
    };
    output.write_text(&text)
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub params: ParamsArgs,
    /// Write a JSON report of every check here as well.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn run_validate(args: &ValidateArgs) -> anyhow::Result<()> {
    let params = args.params.load()?;
    let checks = run_checks(&params)?;
    for c in &checks {
        println!("{c}");
    }
    if let Some(path) = &args.out {
        OutputArgs {
            out: Some(path.clone()),
            format: Format::Json,
        }
        .write_rows(&checks)?;
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    println!(
        "{} of {} checks passed",
        checks.len() - failed.len(),
        checks.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure(format!("failed: {}", failed.join(", "))).into())
    }
}
