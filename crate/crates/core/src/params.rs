//! Model parameters and their TOML representation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::FlopProfile;
use crate::model::{KernelLayout, LadderParams, MemoryModel, PipelineSpec};
use crate::transfer::{DmaConfig, SystemModel};

/// The parameter file shipped with the crate; parses to `ModelParams::default()`.
pub const DEFAULTS_TOML: &str = include_str!("../model-defaults.toml");

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub pipeline: PipelineSpec,
    pub memory: MemoryModel,
    pub kernel: KernelLayout,
    pub flops: FlopProfile,
    pub ladder: LadderParams,
    pub dma: DmaConfig,
}

impl ModelParams {
    /// Parses a parameter file. Missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: Self = toml::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.memory.validate()?;
        self.kernel.validate()?;
        self.dma.validate()
    }

    pub fn system(&self) -> SystemModel {
        SystemModel {
            pipeline: self.pipeline,
            memory: self.memory,
            layout: self.kernel,
            flops: self.flops,
            dma: self.dma,
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("parameters always serialize")
    }
}
