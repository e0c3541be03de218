//! Shared fixtures for the criterion benches.

use pwflow_core::{fill_fields, make_grid, AdvectionCoefficients, FieldSet, GeneratorSpec};

/// Grids the schedule benches run on, smallest first.
pub const SCHEDULE_GRIDS: [(usize, usize, usize); 2] = [(16, 16, 16), (32, 32, 32)];

/// Seeded random fields and uniform 0.25 coefficients, as `pwflow bench` uses.
pub fn standard_inputs(
    nx: usize,
    ny: usize,
    nz: usize,
    seed: u64,
) -> (FieldSet, AdvectionCoefficients) {
    let dims = make_grid(nx, ny, nz).expect("bench grid");
    (
        fill_fields(dims, GeneratorSpec::Random { seed }),
        AdvectionCoefficients::uniform(nz, 0.25),
    )
}
