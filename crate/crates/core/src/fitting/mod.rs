//! Parameter estimation: fringe fits, Fock-population fits and beamsplitter
//! calibration.

mod calibrate;
mod fringe;
pub mod lm;
pub mod nnls;
mod populations;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_beamsplitter, transfer_fidelity, BsCalibration, ContrastEvaluator, SimulatedContrast};
pub use fringe::{fit_fringe, fit_fringe_with, FringeFitOptions};
pub use populations::{
    fit_fock_populations, fit_fock_populations_offres, fit_fock_populations_with, thermal_seed, OffresFitOptions,
    PopulationFitOptions, PopulationStrategy, RabiDataset, RabiPoint, Spectator,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub residual_rms: f64,
    /// Projected gradient of the weighted cost at the solution.
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub strategy: String,
    /// Quantities computed from the fitted parameters.
    pub derived: BTreeMap<String, f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.std_errors.as_ref().map(|s| s[i])
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn diag_sqrt(m: &DMatrix<f64>) -> Vec<f64> {
    m.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// Binomial standard deviation with the `(k + ½)/(n + 1)` estimate, which
/// stays finite at `p ∈ {0, 1}`.
fn binomial_sigma(p: f64, shots: u64) -> f64 {
    let n = shots as f64;
    let k = (p * n).round();
    let pt = (k + 0.5) / (n + 1.0);
    (pt * (1.0 - pt) / n).sqrt()
}
