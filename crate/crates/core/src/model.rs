//! Analytic model of the FPGA dataflow kernel.
//!
//! A pipelined inner loop of depth `D` and initiation interval `II` fed `N`
//! elements runs for `D + II * N` cycles: it spends `D` cycles filling and `D`
//! draining, and is fully occupied for the rest. The kernel processes one Y
//! batch of `y_batch` columns (`y_batch * nz` elements) per pipeline run, once
//! per X plane. Memory phases (staging batch planes from on-card SDRAM) and
//! compute phases are serialised.
//!
//! The SDRAM model has two fitted parameters: the effective bandwidth seen by a
//! single engine, and a multiplicative derating applied once per additional
//! engine sharing the same memory controller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDims;
use crate::kernel::{expression_loads, FlopProfile, STENCIL_COLUMNS};
use crate::schedule::partition_extent;

pub const BYTES_PER_VALUE: u64 = 8;

/// Nominal column height used when factorising a bare cell count.
pub const NOMINAL_COLUMN: u64 = 64;

/// Grid extent for modelling. Unlike [`GridDims`], zero extents are allowed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub nx: u64,
    pub ny: u64,
    pub nz: u64,
}

impl Extent {
    pub const fn new(nx: u64, ny: u64, nz: u64) -> Self {
        Self { nx, ny, nz }
    }

    pub fn cells(&self) -> u64 {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.cells() == 0
    }

    /// Factorises a cell count into columns of [`NOMINAL_COLUMN`] levels
    /// (or `cells` levels when smaller) laid out on an X/Y footprint as
    /// close to square as possible, `nx <= ny`. The result holds at least
    /// `cells` rounded to whole columns.
    pub fn from_cells(cells: u64) -> Self {
        if cells == 0 {
            return Self::new(0, 0, 0);
        }
        let nz = NOMINAL_COLUMN.min(cells);
        let columns = ((cells as f64 / nz as f64).round() as u64).max(1);
        let nx = ((columns as f64).sqrt().floor() as u64).max(1);
        let ny = columns.div_ceil(nx);
        Self::new(nx, ny, nz)
    }
}

impl From<GridDims> for Extent {
    fn from(d: GridDims) -> Self {
        Self::new(d.nx() as u64, d.ny() as u64, d.nz() as u64)
    }
}

impl std::fmt::Display for Extent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSpec {
    /// Pipeline depth in cycles.
    pub depth: u64,
    /// Initiation interval, cycles between successive elements.
    pub ii: u64,
    pub clock_hz: f64,
}

impl PipelineSpec {
    pub fn new(depth: u64, ii: u64, clock_hz: f64) -> Self {
        Self {
            depth,
            ii,
            clock_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.ii == 0 {
            return Err(Error::InvalidParameter(
                "pipeline depth and initiation interval must be >= 1".into(),
            ));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::InvalidParameter("clock_hz must be positive".into()));
        }
        Ok(())
    }
}

impl Default for PipelineSpec {
    /// The tuned kernel: depth 72, II 1, 310 MHz.
    fn default() -> Self {
        Self::new(72, 1, 310e6)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    pub fill_cycles: u64,
    pub drain_cycles: u64,
    pub full_cycles: u64,
    pub utilization: f64,
}

pub fn pipeline_cycles(spec: &PipelineSpec, n_elements: u64) -> CycleReport {
    let total = spec.depth + spec.ii * n_elements;
    let full = total.saturating_sub(2 * spec.depth);
    CycleReport {
        total_cycles: total,
        fill_cycles: spec.depth,
        drain_cycles: spec.depth,
        full_cycles: full,
        utilization: full as f64 / total as f64,
    }
}

/// Time for one element to traverse the pipeline.
pub fn pipeline_latency(spec: &PipelineSpec) -> f64 {
    spec.depth as f64 / spec.clock_hz
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryModel {
    /// Planes of `y_batch * nz` values moved per X step (reads plus writes).
    pub arrays_per_xstep: u64,
    /// Effective SDRAM bandwidth for a lone engine on a controller, bytes/s.
    pub eff_bandwidth_1: f64,
    /// Bandwidth derating per additional engine on the same controller.
    pub contention: f64,
    /// Burst size in bytes. Reported only.
    pub burst_bytes: u64,
    /// Maximum in-flight bursts. Reported only.
    pub outstanding: u64,
}

impl MemoryModel {
    pub fn validate(&self) -> Result<()> {
        if self.arrays_per_xstep == 0 || self.burst_bytes == 0 || self.outstanding == 0 {
            return Err(Error::InvalidParameter(
                "memory model counts must be positive".into(),
            ));
        }
        if !(self.eff_bandwidth_1.is_finite() && self.eff_bandwidth_1 > 0.0) {
            return Err(Error::InvalidParameter(
                "eff_bandwidth_1 must be positive".into(),
            ));
        }
        if !(self.contention > 0.0 && self.contention <= 1.0) {
            return Err(Error::InvalidParameter(
                "contention must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Bandwidth each engine sees when `engines_on_controller` share it.
    pub fn bandwidth(&self, engines_on_controller: u64) -> f64 {
        let extra = engines_on_controller.saturating_sub(1);
        self.eff_bandwidth_1 * self.contention.powi(extra as i32)
    }
}

impl Default for MemoryModel {
    /// Bandwidth and contention are the two-point fit to the published
    /// single-engine and twelve-engine kernel times (see `model-defaults.toml`).
    fn default() -> Self {
        Self {
            arrays_per_xstep: 6,
            eff_bandwidth_1: 1.751_318_500_205_321_3e9,
            contention: 0.923_067_908_628_101,
            burst_bytes: 256 * BYTES_PER_VALUE,
            outstanding: 8,
        }
    }
}

fn batches(extent: &Extent, y_batch: u64) -> u64 {
    extent.nx * extent.ny.div_ceil(y_batch)
}

/// `nx * ceil(ny / y_batch)` pipeline runs of `y_batch * nz` elements each.
pub fn kernel_compute_cycles(extent: &Extent, spec: &PipelineSpec, y_batch: u64) -> u64 {
    debug_assert!(y_batch >= 1);
    if extent.is_empty() {
        return 0;
    }
    batches(extent, y_batch) * pipeline_cycles(spec, y_batch * extent.nz).total_cycles
}

/// SDRAM bytes staged per kernel run.
pub fn kernel_memory_bytes(extent: &Extent, mem: &MemoryModel, y_batch: u64) -> u64 {
    batches(extent, y_batch) * mem.arrays_per_xstep * y_batch * extent.nz * BYTES_PER_VALUE
}

pub fn kernel_memory_seconds(
    extent: &Extent,
    mem: &MemoryModel,
    y_batch: u64,
    engines_on_controller: u64,
) -> f64 {
    kernel_memory_bytes(extent, mem, y_batch) as f64 / mem.bandwidth(engines_on_controller)
}

/// How engines are laid out on the card.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelLayout {
    /// Columns per Y batch the kernel was built for.
    pub y_batch: u64,
    /// Independent SDRAM controllers engines are spread across.
    pub controllers: u64,
}

impl Default for KernelLayout {
    fn default() -> Self {
        Self {
            y_batch: 64,
            controllers: 2,
        }
    }
}

impl KernelLayout {
    pub fn validate(&self) -> Result<()> {
        if self.y_batch == 0 || self.controllers == 0 {
            return Err(Error::InvalidParameter(
                "y_batch and controllers must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The load each engine runs under: its X planes and its controller's occupancy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineShare {
    pub extent: Extent,
    pub engines_on_controller: u64,
}

/// Splits X as evenly as possible and deals engines round-robin onto
/// controllers. Engines beyond `nx` would have no planes and are left idle.
pub fn engine_shares(extent: &Extent, engines: u64, controllers: u64) -> Result<Vec<EngineShare>> {
    if engines == 0 || controllers == 0 {
        return Err(Error::InvalidParameter(
            "need at least one engine and controller".into(),
        ));
    }
    if extent.nx == 0 {
        return Ok(Vec::new());
    }
    let active = engines.min(extent.nx);
    let slabs = partition_extent(extent.nx as usize, active as usize)?;
    let mut load = vec![0u64; controllers as usize];
    for e in 0..active {
        load[(e % controllers) as usize] += 1;
    }
    Ok(slabs
        .iter()
        .enumerate()
        .map(|(e, s)| EngineShare {
            extent: Extent::new(s.len() as u64, extent.ny, extent.nz),
            engines_on_controller: load[e % controllers as usize],
        })
        .collect())
}

fn share_time(
    share: &EngineShare,
    spec: &PipelineSpec,
    mem: &MemoryModel,
    y_batch: u64,
) -> (f64, f64) {
    let batch = y_batch.min(share.extent.ny).max(1);
    let compute = kernel_compute_cycles(&share.extent, spec, batch) as f64 / spec.clock_hz;
    let memory = kernel_memory_seconds(&share.extent, mem, batch, share.engines_on_controller);
    (compute, memory)
}

/// Kernel wall time: the slowest engine's compute plus memory phases.
///
/// A batch larger than `ny` is clamped to `ny`.
pub fn kernel_time(
    extent: &Extent,
    spec: &PipelineSpec,
    mem: &MemoryModel,
    layout: &KernelLayout,
    engines: u64,
) -> Result<f64> {
    spec.validate()?;
    mem.validate()?;
    layout.validate()?;
    if extent.is_empty() {
        engine_shares(extent, engines, layout.controllers)?;
        return Ok(0.0);
    }
    Ok(engine_shares(extent, engines, layout.controllers)?
        .iter()
        .map(|s| {
            let (c, m) = share_time(s, spec, mem, layout.y_batch);
            c + m
        })
        .fold(0.0, f64::max))
}

/// A measured kernel time used for calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub extent: Extent,
    pub engines: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub memory: MemoryModel,
    /// `(modelled - measured) / measured`, one per observation.
    pub relative_residuals: Vec<f64>,
}

/// Fits `eff_bandwidth_1` and `contention` to measured kernel times.
///
/// The slowest engine is always engine 0 (largest slab, on the busiest
/// controller), so each observation gives
/// `ln(bytes / (T - compute)) = ln(bw1) + (load - 1) ln(contention)`,
/// which is solved by ordinary least squares in log space, i.e. minimising
/// relative error. Fields of `base` other than the two fitted ones are kept.
pub fn calibrate(
    observations: &[Observation],
    spec: &PipelineSpec,
    base: &MemoryModel,
    layout: &KernelLayout,
) -> Result<Calibration> {
    spec.validate()?;
    layout.validate()?;
    if observations.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least two observations, got {}",
            observations.len()
        )));
    }

    let unit = MemoryModel {
        eff_bandwidth_1: 1.0,
        contention: 1.0,
        ..*base
    };
    let mut xs = Vec::with_capacity(observations.len());
    let mut ys = Vec::with_capacity(observations.len());
    for obs in observations {
        if obs.extent.is_empty() || obs.seconds.is_nan() || obs.seconds <= 0.0 {
            return Err(Error::Calibration(format!(
                "observation on {} with {} s carries no information",
                obs.extent, obs.seconds
            )));
        }
        let shares = engine_shares(&obs.extent, obs.engines, layout.controllers)?;
        let critical = shares[0];
        let (compute, bytes) = share_time(&critical, spec, &unit, layout.y_batch);
        let memory = obs.seconds - compute;
        if memory <= 0.0 {
            return Err(Error::Calibration(format!(
                "{} s on {} is at or below the compute bound of {compute:.6} s",
                obs.seconds, obs.extent
            )));
        }
        xs.push((critical.engines_on_controller - 1) as f64);
        ys.push((bytes / memory).ln());
    }

    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Calibration(
            "observations must cover at least two controller occupancies".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let memory = MemoryModel {
        eff_bandwidth_1: intercept.exp(),
        contention: slope.exp(),
        ..*base
    };
    memory
        .validate()
        .map_err(|e| Error::Calibration(format!("fit is not physical: {e}")))?;

    let relative_residuals = observations
        .iter()
        .map(|o| {
            kernel_time(&o.extent, spec, &memory, layout, o.engines)
                .map(|t| (t - o.seconds) / o.seconds)
        })
        .collect::<Result<_>>()?;
    Ok(Calibration {
        memory,
        relative_residuals,
    })
}

/// `cells * flops_per_cell / seconds`, in GFLOP/s.
pub fn gflops(cells: f64, profile: &FlopProfile, seconds: f64) -> Result<f64> {
    if seconds.is_nan() || seconds <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "elapsed time must be positive, got {seconds}"
        )));
    }
    Ok(cells * profile.total_per_cell() as f64 / seconds / 1e9)
}

/// Parameters of the earlier stages of the optimisation ladder that differ
/// from the tuned kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderParams {
    /// Depth of the first pipelined inner loop.
    pub initial_depth: u64,
    /// Initiation interval while scratch held a single column.
    pub column_ii: u64,
    /// Depth after operands were hoisted into temporaries.
    pub extracted_depth: u64,
    pub base_clock_hz: f64,
    /// Clock period after retiming the floating point cores.
    pub retimed_period_s: f64,
    /// Fraction of burst bandwidth achieved with single-beat port accesses.
    pub single_beat_efficiency: f64,
    /// Serialised plane copies per X step before copies were fused.
    pub memcpy_passes: u64,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self {
            initial_depth: 71,
            column_ii: 2,
            extracted_depth: 65,
            base_clock_hz: 250e6,
            retimed_period_s: 3.2e-9,
            single_beat_efficiency: 0.5,
            memcpy_passes: 6,
        }
    }
}

/// One rung of the optimisation ladder as the model sees it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderStep {
    pub row: u32,
    pub label: &'static str,
    pub pipeline: PipelineSpec,
    pub y_batch: u64,
    /// Values moved between SDRAM and the kernel per batch plane.
    pub arrays_per_xstep: u64,
    pub bandwidth_scale: f64,
    pub copy_passes: u64,
}

impl LadderStep {
    /// Modelled single-engine kernel time.
    pub fn time(&self, extent: &Extent, mem: &MemoryModel) -> f64 {
        if extent.is_empty() {
            return 0.0;
        }
        let batch = self.y_batch.min(extent.ny).max(1);
        let runs = batches(extent, batch);
        let cycles = runs
            * (pipeline_cycles(&self.pipeline, batch * extent.nz).total_cycles
                + self.copy_passes * batch * extent.nz);
        let mem = MemoryModel {
            arrays_per_xstep: self.arrays_per_xstep,
            eff_bandwidth_1: mem.eff_bandwidth_1 * self.bandwidth_scale,
            ..*mem
        };
        cycles as f64 / self.pipeline.clock_hz + kernel_memory_seconds(extent, &mem, batch, 1)
    }
}

/// Ladder rows 3 to 10. Row 10 is the tuned kernel and matches
/// [`kernel_time`] for a single engine.
pub fn ladder_steps(
    ladder: &LadderParams,
    tuned: &PipelineSpec,
    mem: &MemoryModel,
    layout: &KernelLayout,
) -> Vec<LadderStep> {
    let base = |depth, ii| PipelineSpec::new(depth, ii, ladder.base_clock_hz);
    // Before any scratch, every operand load and result store hits the port.
    let per_point_accesses = expression_loads(false).iter().sum::<u64>() + 3;
    let staged_columns = STENCIL_COLUMNS.len() as u64 + 3;
    let slow = ladder.single_beat_efficiency;
    let yb = layout.y_batch;
    let step = |row, label, pipeline, y_batch, arrays, scale, passes| LadderStep {
        row,
        label,
        pipeline,
        y_batch,
        arrays_per_xstep: arrays,
        bandwidth_scale: scale,
        copy_passes: passes,
    };
    vec![
        step(
            3,
            "pipelined inner loop",
            base(ladder.initial_depth, 1),
            1,
            per_point_accesses,
            slow,
            0,
        ),
        step(
            4,
            "column scratch",
            base(ladder.initial_depth, ladder.column_ii),
            1,
            staged_columns,
            slow,
            0,
        ),
        step(
            5,
            "y-batched scratch",
            base(ladder.initial_depth, 1),
            yb,
            staged_columns,
            slow,
            0,
        ),
        step(
            6,
            "hoisted operands",
            base(ladder.extracted_depth, 1),
            yb,
            staged_columns,
            slow,
            0,
        ),
        step(
            7,
            "burst port access",
            base(ladder.extracted_depth, 1),
            yb,
            staged_columns,
            1.0,
            0,
        ),
        step(
            8,
            "x inside y batch",
            base(ladder.extracted_depth, 1),
            yb,
            mem.arrays_per_xstep,
            1.0,
            ladder.memcpy_passes,
        ),
        step(
            9,
            "fused copy loops",
            base(ladder.extracted_depth, 1),
            yb,
            mem.arrays_per_xstep,
            1.0,
            0,
        ),
        step(
            10,
            "retimed cores",
            *tuned,
            yb,
            mem.arrays_per_xstep,
            1.0,
            0,
        ),
    ]
}
