use std::cell::RefCell;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fock::{fidelity, Mode, Qubit, Truncation, TwoModeQubitState};
use crate::gates::{beamsplitter, displacement};
use crate::metrology::golden_max;
use crate::sideband::{sideband_pulse, SidebandKind};

/// Maps a beamsplitter drive amplitude to the contrast of the SU(2) fringe
/// it produces.
pub trait ContrastEvaluator: Sync {
    fn contrast(&self, amplitude: f64) -> Result<f64>;
}

/// Exact SU(2) fringe with a beamsplitter angle proportional to the drive
/// amplitude. Contrast is `(max − min)/(max + min)` of `P↓` over the phase
/// grid, read out with a red sideband on mode a.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedContrast {
    pub alpha: f64,
    pub mix_per_amplitude: f64,
    pub beta: f64,
    /// Phase samples over one period; odd so that `π` is included.
    pub n_phases: usize,
    pub truncation: Truncation,
}

impl SimulatedContrast {
    pub fn new(alpha: f64, mix_per_amplitude: f64) -> Result<Self> {
        ensure(alpha > 0.0 && alpha.is_finite(), || "alpha must be positive".into())?;
        ensure(mix_per_amplitude > 0.0 && mix_per_amplitude.is_finite(), || {
            "mix_per_amplitude must be positive".into()
        })?;
        let n = crate::fock::default_n_max(alpha * alpha, crate::fock::TailShape::Poisson);
        Ok(SimulatedContrast {
            alpha,
            mix_per_amplitude,
            beta: PI / 2.0,
            n_phases: 17,
            truncation: Truncation::with_cutoffs(n, n)?,
        })
    }

    pub fn mix(&self, amplitude: f64) -> f64 {
        amplitude * self.mix_per_amplitude
    }

    fn p_down(&self, mix: f64, phi: f64) -> Result<f64> {
        let s = TwoModeQubitState::vacuum(self.truncation, Qubit::Up)?;
        let s = displacement(&s, Complex64::new(self.alpha, 0.0), Mode::A)?;
        let s = beamsplitter(&s, mix, 0.0)?;
        let s = beamsplitter(&s, mix, phi + PI)?;
        Ok(sideband_pulse(&s, self.beta, SidebandKind::Red, Mode::A)?.p_down())
    }
}

impl ContrastEvaluator for SimulatedContrast {
    fn contrast(&self, amplitude: f64) -> Result<f64> {
        ensure(self.n_phases >= 3, || "need at least 3 phase samples".into())?;
        let mix = self.mix(amplitude);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..self.n_phases {
            let phi = TAU * k as f64 / (self.n_phases - 1) as f64;
            let p = self.p_down(mix, phi)?;
            lo = lo.min(p);
            hi = hi.max(p);
        }
        Ok(if hi + lo > 0.0 { (hi - lo) / (hi + lo) } else { 0.0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsCalibration {
    pub amplitude: f64,
    pub contrast: f64,
    /// The best grid point was an end point, so the true optimum may lie
    /// outside the grid.
    pub at_boundary: bool,
}

/// Amplitude that maximizes fringe contrast: grid search, then golden-section
/// refinement between the neighbours of the best node.
pub fn calibrate_beamsplitter<E: ContrastEvaluator>(evaluator: &E, amplitude_grid: &[f64]) -> Result<BsCalibration> {
    ensure(amplitude_grid.len() >= 3, || "amplitude grid needs >= 3 points".into())?;
    ensure(amplitude_grid.windows(2).all(|w| w[1] > w[0]), || {
        "amplitude grid must be strictly increasing".into()
    })?;
    let values: Vec<f64> = amplitude_grid
        .par_iter()
        .map(|&a| evaluator.contrast(a))
        .collect::<Result<_>>()?;
    let (mut best, mut worst) = (0, 0);
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
        if values[i] < values[worst] {
            worst = i;
        }
    }
    if values[best] - values[worst] <= 1e-9 {
        return Err(Error::Degenerate("contrast is flat over the amplitude grid".into()));
    }
    let last = amplitude_grid.len() - 1;
    if best == 0 || best == last {
        log::warn!(
            "contrast peaks at the grid edge (amplitude {}); widen the grid",
            amplitude_grid[best]
        );
        return Ok(BsCalibration {
            amplitude: amplitude_grid[best],
            contrast: values[best],
            at_boundary: true,
        });
    }
    let (lo, hi) = (amplitude_grid[best - 1], amplitude_grid[best + 1]);
    let failure = RefCell::new(None);
    let f = |a: f64| match evaluator.contrast(a) {
        Ok(c) => c,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NEG_INFINITY
        }
    };
    let (amp, c) = golden_max(f, lo, hi, (hi - lo) * 1e-9);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (amplitude, contrast) = if c >= values[best] { (amp, c) } else { (amplitude_grid[best], values[best]) };
    Ok(BsCalibration {
        amplitude,
        contrast,
        at_boundary: false,
    })
}

/// Fidelity of two `mix` pulses applied to `|α, 0⟩` with `|0, α⟩`.
pub fn transfer_fidelity(mix: f64, alpha: f64, truncation: Truncation) -> Result<f64> {
    let vac = TwoModeQubitState::vacuum(truncation, Qubit::Up)?;
    let s = displacement(&vac, Complex64::new(alpha, 0.0), Mode::A)?;
    let s = beamsplitter(&beamsplitter(&s, mix, 0.0)?, mix, 0.0)?;
    let target = displacement(&vac, Complex64::new(alpha, 0.0), Mode::B)?;
    fidelity(&s, &target)
}
