use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;

use pwflow_core::{Extent, ModelParams};

/// Exit status 1: the run completed but a check or checksum failed.
#[derive(Debug)]
pub struct Failure(pub String);

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failure {}

/// `NXxNYxNZ`, e.g. `512x512x64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid(pub Extent);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let [nx, ny, nz] = parts.as_slice() else {
            return Err(format!("expected NXxNYxNZ, got `{s}`"));
        };
        let n = |p: &str| {
            p.trim()
                .parse::<u64>()
                .map_err(|e| format!("`{p}` in `{s}`: {e}"))
        };
        Ok(Grid(Extent::new(n(nx)?, n(ny)?, n(nz)?)))
    }
}

/// A cell count, accepting scientific notation such as `268.3e6`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cells(pub u64);

impl FromStr for Cells {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(n) = s.parse::<u64>() {
            return Ok(Cells(n));
        }
        let x: f64 = s
            .parse()
            .map_err(|_| format!("`{s}` is not a cell count"))?;
        if !(0.0..1.8e19).contains(&x) {
            return Err(format!("`{s}` is not a cell count"));
        }
        Ok(Cells(x.round() as u64))
    }
}

/// Engine counts: `12`, `1,2,4` or an inclusive range `1..12`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineList(pub Vec<u64>);

impl FromStr for EngineList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = |p: &str| {
            p.trim()
                .parse::<u64>()
                .ok()
                .filter(|&e| e >= 1)
                .ok_or_else(|| format!("`{p}` is not an engine count >= 1"))
        };
        let mut out = Vec::new();
        for part in s.split(',') {
            if let Some((lo, hi)) = part.split_once("..") {
                let (lo, hi) = (n(lo)?, n(hi.trim_start_matches('='))?);
                if lo > hi {
                    return Err(format!("empty engine range `{part}`"));
                }
                out.extend(lo..=hi);
            } else {
                out.push(n(part)?);
            }
        }
        Ok(EngineList(out))
    }
}

#[derive(Args, Clone, Debug)]
pub struct ParamsArgs {
    /// Model parameter file (TOML); missing keys keep their defaults.
    #[arg(long, env = "PWFLOW_PARAMS", value_name = "FILE")]
    pub params: Option<PathBuf>,
}

impl ParamsArgs {
    pub fn load(&self) -> anyhow::Result<ModelParams> {
        match &self.params {
            None => Ok(ModelParams::default()),
            Some(path) => ModelParams::load(path)
                .with_context(|| format!("loading parameters from {}", path.display())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Clone, Debug)]
pub struct OutputArgs {
    /// Write the table here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl OutputArgs {
    fn sink(&self) -> anyhow::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            ),
            None => Box::new(io::stdout().lock()),
        })
    }

    /// CSV rows with a header in field order, or a pretty JSON array.
    pub fn write_rows<T: Serialize>(&self, rows: &[T]) -> anyhow::Result<()> {
        let mut sink = self.sink()?;
        match self.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(sink);
                for row in rows {
                    w.serialize(row)?;
                }
                w.flush()?;
            }
            Format::Json => {
                serde_json::to_writer_pretty(&mut sink, rows)?;
                writeln!(sink)?;
                sink.flush()?;
            }
        }
        Ok(())
    }

    pub fn write_text(&self, text: &str) -> anyhow::Result<()> {
        let mut sink = self.sink()?;
        sink.write_all(text.as_bytes())?;
        sink.flush()?;
        Ok(())
    }
}

/// Exactly one of `--grid` / `--cells`, or the given default.
pub fn resolve_extent(grid: Option<Grid>, cells: Option<Cells>, default: Extent) -> Extent {
    match (grid, cells) {
        (Some(Grid(e)), _) => e,
        (None, Some(Cells(n))) => Extent::from_cells(n),
        (None, None) => default,
    }
}

pub fn read_to_string(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
