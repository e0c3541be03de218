//! Published measurements the models are compared against.
//!
//! Every row carries a citation anchor of the form `table/row`. Values are
//! read-only; nothing in this module is computed.

use serde::Serialize;

use crate::model::Extent;
use crate::transfer::Topology;

/// One rung of the single-kernel optimisation ladder, measured on a
/// 512x512x64 grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LadderRow {
    pub row: u32,
    pub label: &'static str,
    pub runtime_ms: f64,
    pub lut: Option<u32>,
    pub dsp48e: Option<u32>,
    pub bram18k: Option<u32>,
    pub citation: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DmaRow {
    pub topology: Topology,
    /// Host to card, 1.6e9 bytes.
    pub transfer_ms: f64,
    pub citation: &'static str,
}

/// A platform in the CPU/FPGA comparison on the 1012x1024x64 grid. Runtimes
/// for these were only published graphically and are not carried.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonPlatform {
    pub platform: &'static str,
    pub full_socket_cores: u32,
    pub citation: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Headline {
    pub key: &'static str,
    pub value: f64,
    pub unit: &'static str,
    pub citation: &'static str,
}

pub const LADDER_GRID: (u64, u64, u64) = (512, 512, 64);
pub const COMPARISON_GRID: (u64, u64, u64) = (1012, 1024, 64);
pub const LARGEST_GRID_CELLS: u64 = 268_300_000;

macro_rules! ladder {
    ($row:expr, $label:expr, $ms:expr, $lut:expr, $dsp:expr, $bram:expr, $cite:expr) => {
        LadderRow {
            row: $row,
            label: $label,
            runtime_ms: $ms,
            lut: $lut,
            dsp48e: $dsp,
            bram18k: $bram,
            citation: $cite,
        }
    };
}

pub const KERNEL_LADDER: [LadderRow; 10] = [
    ladder!(
        1,
        "host cpu reference",
        676.4,
        None,
        None,
        None,
        "kernel-ladder/1"
    ),
    ladder!(
        2,
        "initial port",
        51498.0,
        Some(9743),
        Some(85),
        Some(0),
        "kernel-ladder/2"
    ),
    ladder!(
        3,
        "pipelined inner loop",
        14130.0,
        Some(11356),
        Some(58),
        Some(64),
        "kernel-ladder/3"
    ),
    ladder!(
        4,
        "column scratch",
        3213.2,
        Some(27598),
        Some(267),
        Some(130),
        "kernel-ladder/4"
    ),
    ladder!(
        5,
        "y-batched scratch",
        1513.2,
        Some(37474),
        Some(393),
        Some(453),
        "kernel-ladder/5"
    ),
    ladder!(
        6,
        "hoisted operands",
        1301.6,
        Some(38393),
        Some(469),
        Some(312),
        "kernel-ladder/6"
    ),
    ladder!(
        7,
        "burst port access",
        1097.2,
        Some(40913),
        Some(469),
        Some(324),
        "kernel-ladder/7"
    ),
    ladder!(
        8,
        "x inside y batch",
        621.3,
        Some(41151),
        Some(469),
        Some(324),
        "kernel-ladder/8"
    ),
    ladder!(
        9,
        "fused copy loops",
        568.1,
        Some(40638),
        Some(466),
        Some(324),
        "kernel-ladder/9"
    ),
    ladder!(
        10,
        "retimed cores",
        514.9,
        Some(27601),
        Some(406),
        Some(324),
        "kernel-ladder/10"
    ),
];

pub const DMA_TOPOLOGIES: [DmaRow; 4] = [
    DmaRow {
        topology: Topology::SplitBanks4Ch,
        transfer_ms: 232.0,
        citation: "dma-topology/split-banks-4ch",
    },
    DmaRow {
        topology: Topology::OneController4Ch,
        transfer_ms: 280.0,
        citation: "dma-topology/one-controller-4ch",
    },
    DmaRow {
        topology: Topology::ConnectedControllers4Ch,
        transfer_ms: 239.0,
        citation: "dma-topology/connected-controllers-4ch",
    },
    DmaRow {
        topology: Topology::OneChPerController,
        transfer_ms: 342.0,
        citation: "dma-topology/one-ch-per-controller",
    },
];

pub const COMPARISON_PLATFORMS: [ComparisonPlatform; 4] = [
    ComparisonPlatform {
        platform: "sandybridge",
        full_socket_cores: 4,
        citation: "cpu-comparison/sandybridge",
    },
    ComparisonPlatform {
        platform: "ivybridge",
        full_socket_cores: 12,
        citation: "cpu-comparison/ivybridge",
    },
    ComparisonPlatform {
        platform: "broadwell",
        full_socket_cores: 18,
        citation: "cpu-comparison/broadwell",
    },
    ComparisonPlatform {
        platform: "fpga",
        full_socket_cores: 12,
        citation: "cpu-comparison/fpga",
    },
];

macro_rules! headline {
    ($key:expr, $value:expr, $unit:expr) => {
        Headline {
            key: $key,
            value: $value,
            unit: $unit,
            citation: concat!("headline/", $key),
        }
    };
}

pub const HEADLINES: [Headline; 19] = [
    headline!("column-pipeline-depth", 71.0, "cycles"),
    headline!("column-pipeline-ii", 2.0, "cycles"),
    headline!("column-pipeline-total", 199.0, "cycles"),
    headline!("column-pipeline-full", 57.0, "cycles"),
    headline!("column-pipeline-utilization", 0.28, "fraction"),
    headline!("batched-pipeline-total", 4167.0, "cycles"),
    headline!("batched-pipeline-utilization", 0.97, "fraction"),
    headline!("extracted-depth", 65.0, "cycles"),
    headline!("latency-before-retiming", 2.6e-7, "s"),
    headline!("latency-after-retiming", 2.3e-7, "s"),
    headline!("retimed-clock", 310e6, "Hz"),
    headline!("field-volume-one-way", 6.44e9, "B"),
    headline!("transfer-volume-both", 12.88e9, "B"),
    headline!("transfer-time-both", 2.2, "s"),
    headline!("transfer-rate", 5.85e9, "B/s"),
    headline!("kernel-gflops", 14.36, "GFLOP/s"),
    headline!("total-gflops", 4.2, "GFLOP/s"),
    headline!("dma-fraction-12-engines", 0.70, "fraction"),
    headline!("broadwell-12-core-gflops", 17.75, "GFLOP/s"),
];

/// Volume quoted for the 1012x1024x64 breakdown; three fields of doubles
/// on that grid come to 3.18e9 B, so the quoted figure is carried as-is.
pub const BREAKDOWN_QUOTED_VOLUME: Headline = headline!("breakdown-volume", 3.32e9, "B");

pub fn headline(key: &str) -> Option<&'static Headline> {
    HEADLINES
        .iter()
        .chain([&BREAKDOWN_QUOTED_VOLUME])
        .find(|h| h.key == key)
}

/// A published value for one column of a modelled run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PublishedValue {
    /// `ModelReport` column the value corresponds to.
    pub metric: &'static str,
    pub value: f64,
    pub citation: &'static str,
}

/// Published values for a modelled `(grid, engines)` point, if it is one of
/// the configurations that were measured.
pub fn published_for(extent: &Extent, engines: u64) -> Vec<PublishedValue> {
    let value = |metric, key: &str| {
        let h = headline(key).expect("known headline");
        PublishedValue {
            metric,
            value: h.value,
            citation: h.citation,
        }
    };
    let (lx, ly, lz) = LADDER_GRID;
    let (cx, cy, cz) = COMPARISON_GRID;
    if *extent == Extent::new(lx, ly, lz) && engines == 1 {
        let row = &KERNEL_LADDER[9];
        vec![PublishedValue {
            metric: "kernel_seconds",
            value: row.runtime_ms / 1e3,
            citation: row.citation,
        }]
    } else if *extent == Extent::from_cells(LARGEST_GRID_CELLS) && engines == 12 {
        vec![
            value("dma_seconds", "transfer-time-both"),
            value("gflops_kernel", "kernel-gflops"),
            value("gflops_total", "total-gflops"),
        ]
    } else if *extent == Extent::new(cx, cy, cz) && engines == 12 {
        vec![value("dma_fraction", "dma-fraction-12-engines")]
    } else {
        Vec::new()
    }
}
