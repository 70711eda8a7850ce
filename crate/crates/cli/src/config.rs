//! Experiment definitions read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twomode_core::fock::Truncation;
use twomode_core::interferometer::{linspace, CircuitKind, CircuitProgram, Readout};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub circuit: CircuitSection,
    pub grid: GridSpec,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub output: OutputSection,
}

/// Circuit definition; exactly one of `param` and `mean_n` must be given.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    pub kind: CircuitKind,
    pub param: Option<f64>,
    /// Probe `⟨N⟩`, converted to the state parameter.
    pub mean_n: Option<f64>,
    #[serde(default)]
    pub phi0: f64,
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub readout: Readout,
    pub truncation: Option<Truncation>,
}

impl CircuitSection {
    pub fn program(&self) -> Result<CircuitProgram, CliError> {
        let param = match (self.param, self.mean_n) {
            (Some(p), None) => p,
            (None, Some(n)) => self.kind.param_for_mean_n(n)?,
            _ => return Err(CliError::config("circuit needs exactly one of `param` and `mean_n`")),
        };
        let mut prog = CircuitProgram::new(self.kind, param)?
            .with_readout(self.readout)
            .with_offsets(self.phi0, self.v0);
        prog.truncation = self.truncation;
        prog.validate()?;
        Ok(prog)
    }
}

/// Either explicit `values` or `points` samples over `[start, stop]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn resolve(&self) -> Result<Vec<f64>, CliError> {
        let grid = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => linspace(a, b, n),
            (None, None, None, Some(n)) => linspace(0.0, std::f64::consts::TAU, n),
            _ => {
                return Err(CliError::config(
                    "grid needs either `values` or `points` (with optional `start` and `stop`)",
                ))
            }
        };
        if grid.is_empty() {
            return Err(CliError::config("grid is empty"));
        }
        if !grid.iter().all(|x| x.is_finite()) || !grid.windows(2).all(|w| w[1] > w[0]) {
            return Err(CliError::config("grid values must be finite and strictly increasing"));
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub shots: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; excluded from the provenance hash.
    #[serde(skip_serializing)]
    pub dir: Option<PathBuf>,
    pub name: Option<String>,
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}
