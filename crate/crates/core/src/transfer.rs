//! Host/card transfer volumes, DMA times and end-to-end predictions.
//!
//! Volumes are in bytes and rates in bytes per second; where gigabytes are
//! reported they are decimal (1 GB = 1e9 B).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::FlopProfile;
use crate::model::{
    gflops, kernel_time, Extent, KernelLayout, MemoryModel, PipelineSpec, BYTES_PER_VALUE,
};

/// Bytes moved by the DMA microbenchmark the topology rates are fitted to.
pub const DMA_REFERENCE_BYTES: f64 = 1.6e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    /// Two separate SDRAM banks, each fed by two DMA channels.
    #[serde(rename = "split-banks-4ch")]
    SplitBanks4Ch,
    /// All four channels into a single controller.
    #[serde(rename = "one-controller-4ch")]
    OneController4Ch,
    /// Two controllers joined into one address space.
    #[serde(rename = "connected-controllers-4ch")]
    ConnectedControllers4Ch,
    /// Separate banks, one DMA channel each.
    #[serde(rename = "one-ch-per-controller")]
    OneChPerController,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::SplitBanks4Ch,
        Topology::OneController4Ch,
        Topology::ConnectedControllers4Ch,
        Topology::OneChPerController,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::SplitBanks4Ch => "split-banks-4ch",
            Topology::OneController4Ch => "one-controller-4ch",
            Topology::ConnectedControllers4Ch => "connected-controllers-4ch",
            Topology::OneChPerController => "one-ch-per-controller",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .flat_map(char::to_lowercase)
            .collect();
        Topology::ALL
            .into_iter()
            .find(|t| t.name().replace('-', "") == key)
            .ok_or_else(|| Error::UnknownTopology(s.to_string()))
    }
}

/// Effective one-way DMA bandwidth per topology, bytes/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DmaCalibration {
    pub split_banks_4ch: f64,
    pub one_controller_4ch: f64,
    pub connected_controllers_4ch: f64,
    pub one_ch_per_controller: f64,
}

impl DmaCalibration {
    /// Rates that move [`DMA_REFERENCE_BYTES`] in the given times.
    pub fn from_reference_seconds(seconds: [f64; 4]) -> Self {
        let [a, b, c, d] = seconds.map(|s| DMA_REFERENCE_BYTES / s);
        Self {
            split_banks_4ch: a,
            one_controller_4ch: b,
            connected_controllers_4ch: c,
            one_ch_per_controller: d,
        }
    }

    pub fn bandwidth(&self, topology: Topology) -> f64 {
        match topology {
            Topology::SplitBanks4Ch => self.split_banks_4ch,
            Topology::OneController4Ch => self.one_controller_4ch,
            Topology::ConnectedControllers4Ch => self.connected_controllers_4ch,
            Topology::OneChPerController => self.one_ch_per_controller,
        }
    }
}

impl Default for DmaCalibration {
    fn default() -> Self {
        Self::from_reference_seconds([0.232, 0.280, 0.239, 0.342])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmaConfig {
    pub topology: Topology,
    pub calibration: DmaCalibration,
    /// Whole-run rate for the to-card and from-card transfers together.
    pub end_to_end_bandwidth: f64,
}

impl Default for DmaConfig {
    fn default() -> Self {
        Self {
            topology: Topology::SplitBanks4Ch,
            calibration: DmaCalibration::default(),
            end_to_end_bandwidth: 5.85e9,
        }
    }
}

impl DmaConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = Topology::ALL
            .map(|t| self.calibration.bandwidth(t))
            .into_iter()
            .chain([self.end_to_end_bandwidth]);
        for rate in rates {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "DMA bandwidths must be positive, got {rate}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ToCard,
    FromCard,
    Both,
}

/// Three fields go to the card and three source terms come back.
pub fn transfer_volume(extent: &Extent, direction: Direction) -> u64 {
    let one_way = 3 * extent.cells() * BYTES_PER_VALUE;
    match direction {
        Direction::ToCard | Direction::FromCard => one_way,
        Direction::Both => 2 * one_way,
    }
}

pub fn dma_time(bytes: f64, config: &DmaConfig, topology: Topology) -> Result<f64> {
    if bytes.is_nan() || bytes < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "negative transfer size {bytes}"
        )));
    }
    Ok(bytes / config.calibration.bandwidth(topology))
}

/// Predicted kernel, DMA and total times for one run.
///
/// Field order is the stable CSV/JSON column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
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
}

impl ModelReport {
    pub const COLUMNS: [&'static str; 11] = [
        "nx",
        "ny",
        "nz",
        "cells",
        "engines",
        "kernel_seconds",
        "dma_seconds",
        "total_seconds",
        "gflops_kernel",
        "gflops_total",
        "dma_fraction",
    ];
}

/// Everything the end-to-end prediction depends on.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SystemModel {
    pub pipeline: PipelineSpec,
    pub memory: MemoryModel,
    pub layout: KernelLayout,
    pub flops: FlopProfile,
    pub dma: DmaConfig,
}

/// Serialised DMA in, kernel, DMA out.
pub fn end_to_end(extent: &Extent, engines: u64, system: &SystemModel) -> Result<ModelReport> {
    system.dma.validate()?;
    let kernel = kernel_time(
        extent,
        &system.pipeline,
        &system.memory,
        &system.layout,
        engines,
    )?;
    let dma = transfer_volume(extent, Direction::Both) as f64 / system.dma.end_to_end_bandwidth;
    let total = kernel + dma;
    let cells = extent.cells();
    let rate = |t: f64| {
        if t > 0.0 {
            gflops(cells as f64, &system.flops, t)
        } else {
            Ok(0.0)
        }
    };
    Ok(ModelReport {
        nx: extent.nx,
        ny: extent.ny,
        nz: extent.nz,
        cells,
        engines,
        kernel_seconds: kernel,
        dma_seconds: dma,
        total_seconds: total,
        gflops_kernel: rate(kernel)?,
        gflops_total: rate(total)?,
        dma_fraction: if total > 0.0 { dma / total } else { 0.0 },
    })
}

pub fn scaling_table(
    extent: &Extent,
    engines: &[u64],
    system: &SystemModel,
) -> Result<Vec<ModelReport>> {
    if engines.is_empty() {
        return Err(Error::InvalidParameter("engine list is empty".into()));
    }
    engines
        .iter()
        .map(|&e| end_to_end(extent, e, system))
        .collect()
}

pub fn grid_sweep(
    extents: &[Extent],
    engines: u64,
    system: &SystemModel,
) -> Result<Vec<ModelReport>> {
    if extents.is_empty() {
        return Err(Error::InvalidParameter("grid list is empty".into()));
    }
    extents
        .iter()
        .map(|e| end_to_end(e, engines, system))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_examples() {
        let big = Extent::from_cells(268_300_000);
        let both = transfer_volume(&big, Direction::Both) as f64;
        assert!((both / 12.88e9 - 1.0).abs() < 0.01);
        let one = transfer_volume(&big, Direction::ToCard) as f64;
        assert!((one / 6.44e9 - 1.0).abs() < 0.01);
        assert_eq!(transfer_volume(&Extent::new(1, 1, 1), Direction::Both), 48);
        let e = Extent::new(1012, 1024, 64);
        assert_eq!(
            transfer_volume(&e, Direction::Both),
            2 * transfer_volume(&e, Direction::FromCard)
        );
    }

    #[test]
    fn dma_table_is_exact() {
        let cfg = DmaConfig::default();
        let expect = [0.232, 0.280, 0.239, 0.342];
        for (t, want) in Topology::ALL.into_iter().zip(expect) {
            assert_eq!(dma_time(1.6e9, &cfg, t).unwrap(), want, "{t}");
            assert_eq!(dma_time(0.0, &cfg, t).unwrap(), 0.0);
        }
        assert!(dma_time(-1.0, &cfg, Topology::SplitBanks4Ch).is_err());
    }

    #[test]
    fn dma_time_is_additive() {
        let cfg = DmaConfig::default();
        for t in Topology::ALL {
            let (a, b) = (3.7e8, 1.1e9);
            let sum = dma_time(a, &cfg, t).unwrap() + dma_time(b, &cfg, t).unwrap();
            let whole = dma_time(a + b, &cfg, t).unwrap();
            assert!((sum - whole).abs() <= 4.0 * f64::EPSILON * whole);
        }
    }

    #[test]
    fn topology_names_round_trip() {
        for t in Topology::ALL {
            assert_eq!(t.name().parse::<Topology>().unwrap(), t);
        }
        assert_eq!(
            "Split_Banks_4ch".parse::<Topology>().unwrap(),
            Topology::SplitBanks4Ch
        );
        assert!(matches!(
            "bogus".parse::<Topology>(),
            Err(Error::UnknownTopology(_))
        ));
    }

    #[test]
    fn end_to_end_dma_and_invariants() {
        let sys = SystemModel::default();
        let r = end_to_end(&Extent::from_cells(268_300_000), 12, &sys).unwrap();
        assert!((r.dma_seconds / 2.2 - 1.0).abs() < 0.02);
        assert_eq!(r.total_seconds, r.kernel_seconds + r.dma_seconds);
        assert!((0.0..=1.0).contains(&r.dma_fraction));

        let zero = end_to_end(&Extent::from_cells(0), 12, &sys).unwrap();
        assert_eq!(zero.total_seconds, 0.0);
        assert_eq!(zero.gflops_total, 0.0);
        assert_eq!(zero.dma_fraction, 0.0);
    }

    #[test]
    fn scaling_table_shape() {
        let sys = SystemModel::default();
        let e = Extent::new(1012, 1024, 64);
        let engines: Vec<u64> = (1..=12).collect();
        let rows = scaling_table(&e, &engines, &sys).unwrap();
        assert!(rows
            .windows(2)
            .all(|w| w[0].dma_seconds == w[1].dma_seconds));
        assert!(rows
            .windows(2)
            .all(|w| w[1].kernel_seconds <= w[0].kernel_seconds));
        assert!(rows[0].kernel_seconds > rows[11].kernel_seconds);
        let single = scaling_table(&e, &[4], &sys).unwrap();
        assert_eq!(single[0], end_to_end(&e, 4, &sys).unwrap());
        assert!(scaling_table(&e, &[], &sys).is_err());
    }

    #[test]
    fn grid_sweep_is_monotone() {
        let sys = SystemModel::default();
        let grids: Vec<Extent> = [1e6, 4e6, 16e6, 67e6, 268e6]
            .iter()
            .map(|&c| Extent::from_cells(c as u64))
            .collect();
        let rows = grid_sweep(&grids, 12, &sys).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].kernel_seconds > w[0].kernel_seconds);
            assert!(w[1].dma_seconds > w[0].dma_seconds);
            assert!(w[1].total_seconds > w[0].total_seconds);
        }
    }
}
