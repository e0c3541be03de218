//! Model identities checked against the published numbers.

use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::model::{
    calibrate, kernel_time, pipeline_cycles, pipeline_latency, Extent, Observation, PipelineSpec,
};
use crate::params::ModelParams;
use crate::reference::{
    headline, COMPARISON_GRID, DMA_TOPOLOGIES, LADDER_GRID, LARGEST_GRID_CELLS,
};
use crate::transfer::{dma_time, end_to_end, transfer_volume, Direction, DMA_REFERENCE_BYTES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "tolerance", rename_all = "kebab-case")]
pub enum Rule {
    Exact,
    /// `|actual - expected| <= tol * |expected|`
    Relative(f64),
    Absolute(f64),
    AtLeast,
    /// Within this many units in the last place.
    Ulps(u64),
}

impl Rule {
    pub fn holds(&self, expected: f64, actual: f64) -> bool {
        match *self {
            Rule::Exact => actual == expected,
            Rule::Relative(tol) => (actual - expected).abs() <= tol * expected.abs(),
            Rule::Absolute(tol) => (actual - expected).abs() <= tol,
            Rule::AtLeast => actual >= expected,
            Rule::Ulps(n) => {
                let (a, b) = (actual.to_bits() as i64, expected.to_bits() as i64);
                actual.is_finite() && actual.signum() == expected.signum() && a.abs_diff(b) <= n
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Exact => f.write_str("exact"),
            Rule::Relative(t) => write!(f, "±{}%", t * 100.0),
            Rule::Absolute(t) => write!(f, "±{t}"),
            Rule::AtLeast => f.write_str(">="),
            Rule::Ulps(n) => write!(f, "<={n} ulp"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    /// Acceptance criterion this check belongs to.
    pub criterion: u8,
    pub name: String,
    pub citation: &'static str,
    pub expected: f64,
    pub actual: f64,
    pub rule: Rule,
    pub passed: bool,
}

impl Check {
    fn new(
        criterion: u8,
        name: impl Into<String>,
        citation: &'static str,
        expected: f64,
        actual: f64,
        rule: Rule,
    ) -> Self {
        Self {
            criterion,
            name: name.into(),
            citation,
            expected,
            actual,
            rule,
            passed: rule.holds(expected, actual),
        }
    }

    fn holds(criterion: u8, name: impl Into<String>, citation: &'static str, ok: bool) -> Self {
        Self::new(
            criterion,
            name,
            citation,
            1.0,
            if ok { 1.0 } else { 0.0 },
            Rule::Exact,
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: expected {} ({}), got {} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.expected,
            self.rule,
            self.actual,
            self.citation
        )
    }
}

fn cite(key: &str) -> &'static str {
    headline(key).map_or("", |h| h.citation)
}

/// The kernel times the shipped memory model is fitted to: the final
/// ladder row, and the 12-engine run implied by the kernel GFLOP/s rate.
pub fn anchor_observations(params: &ModelParams) -> [Observation; 2] {
    let (nx, ny, nz) = LADDER_GRID;
    let rate = headline("kernel-gflops").unwrap().value * 1e9;
    let flops = LARGEST_GRID_CELLS as f64 * params.flops.total_per_cell() as f64;
    [
        Observation {
            extent: Extent::new(nx, ny, nz),
            engines: 1,
            seconds: 0.5149,
        },
        Observation {
            extent: Extent::from_cells(LARGEST_GRID_CELLS),
            engines: 12,
            seconds: flops / rate,
        },
    ]
}

/// Evaluates every published model identity under `params`.
pub fn run_checks(params: &ModelParams) -> Result<Vec<Check>> {
    params.validate()?;
    let mut checks = Vec::new();
    let lp = &params.ladder;
    let nominal_column = 64;

    let column = pipeline_cycles(
        &PipelineSpec::new(lp.initial_depth, lp.column_ii, lp.base_clock_hz),
        nominal_column,
    );
    checks.push(Check::new(
        1,
        "column pipeline total cycles",
        cite("column-pipeline-total"),
        199.0,
        column.total_cycles as f64,
        Rule::Exact,
    ));
    checks.push(Check::new(
        1,
        "column pipeline full cycles",
        cite("column-pipeline-full"),
        57.0,
        column.full_cycles as f64,
        Rule::Exact,
    ));
    checks.push(Check::new(
        1,
        "column pipeline utilization",
        cite("column-pipeline-utilization"),
        0.286,
        column.utilization,
        Rule::Absolute(0.005),
    ));
    let batched = pipeline_cycles(
        &PipelineSpec::new(lp.initial_depth, params.pipeline.ii, lp.base_clock_hz),
        nominal_column * params.kernel.y_batch,
    );
    checks.push(Check::new(
        1,
        "batched pipeline total cycles",
        cite("batched-pipeline-total"),
        4167.0,
        batched.total_cycles as f64,
        Rule::Exact,
    ));
    checks.push(Check::new(
        1,
        "batched pipeline utilization",
        cite("batched-pipeline-utilization"),
        0.966,
        batched.utilization,
        Rule::Absolute(0.005),
    ));

    let before = pipeline_latency(&PipelineSpec::new(lp.extracted_depth, 1, lp.base_clock_hz));
    checks.push(Check::new(
        2,
        "latency before retiming",
        cite("latency-before-retiming"),
        2.60e-7,
        before,
        Rule::Exact,
    ));
    let after = pipeline_latency(&PipelineSpec::new(
        params.pipeline.depth,
        1,
        1.0 / lp.retimed_period_s,
    ));
    checks.push(Check::new(
        2,
        "latency after retiming",
        cite("latency-after-retiming"),
        2.304e-7,
        after,
        Rule::Exact,
    ));

    let largest = Extent::from_cells(LARGEST_GRID_CELLS);
    let both = transfer_volume(&largest, Direction::Both) as f64;
    checks.push(Check::new(
        3,
        "transfer volume, both directions",
        cite("transfer-volume-both"),
        12.88e9,
        both,
        Rule::Relative(0.01),
    ));
    checks.push(Check::new(
        3,
        "transfer volume, one way",
        cite("field-volume-one-way"),
        6.44e9,
        transfer_volume(&largest, Direction::ToCard) as f64,
        Rule::Relative(0.01),
    ));
    checks.push(Check::new(
        3,
        "end-to-end transfer time",
        cite("transfer-time-both"),
        2.2,
        both / params.dma.end_to_end_bandwidth,
        Rule::Relative(0.02),
    ));

    for row in DMA_TOPOLOGIES {
        let secs = dma_time(DMA_REFERENCE_BYTES, &params.dma, row.topology)?;
        checks.push(Check::new(
            4,
            format!("dma time {}", row.topology),
            row.citation,
            row.transfer_ms / 1e3,
            secs,
            Rule::Exact,
        ));
    }

    let system = params.system();
    let (nx, ny, nz) = LADDER_GRID;
    let single = kernel_time(
        &Extent::new(nx, ny, nz),
        &params.pipeline,
        &params.memory,
        &params.kernel,
        1,
    )?;
    checks.push(Check::new(
        5,
        "single-engine kernel time",
        "kernel-ladder/10",
        0.5149,
        single,
        Rule::Relative(0.05),
    ));
    let big = end_to_end(&largest, 12, &system)?;
    checks.push(Check::new(
        5,
        "12-engine kernel GFLOP/s",
        cite("kernel-gflops"),
        14.36,
        big.gflops_kernel,
        Rule::Relative(0.05),
    ));
    checks.push(Check::new(
        5,
        "12-engine total GFLOP/s",
        cite("total-gflops"),
        4.2,
        big.gflops_total,
        Rule::Relative(0.10),
    ));
    let fit = calibrate(
        &anchor_observations(params),
        &params.pipeline,
        &params.memory,
        &params.kernel,
    );
    let worst = fit.map_or(f64::INFINITY, |c| {
        c.relative_residuals.iter().fold(0.0, |m, r| r.abs().max(m))
    });
    checks.push(Check::new(
        5,
        "two-point calibration worst residual",
        "kernel-ladder/10",
        0.0,
        worst,
        Rule::Absolute(0.05),
    ));

    let (cx, cy, cz) = COMPARISON_GRID;
    let comparison = Extent::new(cx, cy, cz);
    let engines: Vec<u64> = (1..=12).collect();
    let rows = crate::transfer::scaling_table(&comparison, &engines, &system)?;
    checks.push(Check::new(
        6,
        "12-engine dma fraction",
        cite("dma-fraction-12-engines"),
        0.65,
        rows[11].dma_fraction,
        Rule::AtLeast,
    ));
    checks.push(Check::holds(
        6,
        "dma fraction non-decreasing over 1..12 engines",
        cite("dma-fraction-12-engines"),
        rows.windows(2)
            .all(|w| w[1].dma_fraction >= w[0].dma_fraction),
    ));

    Ok(checks)
}
