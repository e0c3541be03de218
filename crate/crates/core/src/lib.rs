//! Piacsek-Williams advection: an exact stencil kernel, instrumented CPU
//! execution schedules mirroring a dataflow optimisation ladder, and an
//! analytic cost model of an FPGA implementation and its DMA transfers.

pub mod error;
pub mod grid;
pub mod kernel;
pub mod model;
pub mod params;
pub mod reference;
pub mod schedule;
pub mod transfer;
pub mod validation;

pub use error::{Error, Result};
pub use grid::{
    checksum, fill_fields, make_grid, Digest, Field3D, FieldSet, GeneratorSpec, GridDims, Lcg64,
    SourceSet,
};
pub use kernel::{
    advect_point_u, advect_point_v, advect_point_w, flops, flops_for_cells, run_reference,
    AdvectionCoefficients, FlopProfile, Wind,
};
pub use model::{
    calibrate, gflops, kernel_compute_cycles, kernel_memory_seconds, kernel_time, pipeline_cycles,
    pipeline_latency, Calibration, CycleReport, Extent, KernelLayout, LadderParams, MemoryModel,
    Observation, PipelineSpec,
};
pub use params::ModelParams;
pub use schedule::{
    compare_outputs, partition_domain, run_schedule, Comparison, ScheduleRun, ScheduleSpec, Slab,
    TrafficReport, Variant,
};
pub use transfer::{
    dma_time, end_to_end, grid_sweep, scaling_table, transfer_volume, Direction, DmaConfig,
    ModelReport, SystemModel, Topology,
};
pub use validation::{run_checks, Check};
