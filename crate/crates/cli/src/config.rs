//! JSON configuration per command. Every key is optional; command-line flags
//! override the file. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stpca::dp::SolverOptions;
use stpca::eval::grid::{ClusterProtocol, GridSpec, Method};
use stpca::synth::{ArraySignalSpec, OrbitSpec};
use stpca::tensor::TransformKind;

use crate::error::{invalid, CliError, CliResult};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e)))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub out: Option<PathBuf>,
    pub orbit: Option<OrbitSpec>,
    pub array: Option<ArraySignalSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub data: Option<PathBuf>,
    pub method: Option<Method>,
    pub lambda: f64,
    pub eta: f64,
    /// Defaults to the number of ground-truth features.
    pub h: Option<usize>,
    pub seed: u64,
    pub transform: TransformKind,
    pub options: SolverOptions,
    pub out_dir: Option<PathBuf>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            data: None,
            method: None,
            lambda: 1.0,
            eta: 1.0,
            h: None,
            seed: 0,
            transform: TransformKind::Identity,
            options: SolverOptions::default(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    /// Powers of ten from 1e-4 to 1e4.
    Wide,
    /// Powers of ten from 1e-2 to 1e2.
    Narrow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub data: Option<PathBuf>,
    pub method: Option<Method>,
    pub preset: GridPreset,
    /// Explicit values replace the preset.
    pub lambda_grid: Option<Vec<f64>>,
    pub eta_grid: Option<Vec<f64>>,
    pub h: Option<usize>,
    pub seed: u64,
    pub transform: TransformKind,
    pub options: SolverOptions,
    pub protocol: ClusterProtocol,
    pub out: Option<PathBuf>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            data: None,
            method: None,
            preset: GridPreset::Narrow,
            lambda_grid: None,
            eta_grid: None,
            h: None,
            seed: 0,
            transform: TransformKind::Identity,
            options: SolverOptions::default(),
            protocol: ClusterProtocol::default(),
            out: None,
        }
    }
}

impl GridConfig {
    pub fn grid(&self, h: usize) -> GridSpec {
        let base = match self.preset {
            GridPreset::Wide => GridSpec::wide(h),
            GridPreset::Narrow => GridSpec::narrow(h),
        };
        GridSpec::new(
            self.lambda_grid.clone().unwrap_or(base.lambda_grid),
            self.eta_grid.clone().unwrap_or(base.eta_grid),
            h,
        )
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub data: Option<PathBuf>,
    pub selection: Option<PathBuf>,
    pub protocol: ClusterProtocol,
    pub out: Option<PathBuf>,
}

pub fn required<T: Clone>(v: &Option<T>, name: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| invalid(format!("missing {} (flag or config key)", name)))
}
