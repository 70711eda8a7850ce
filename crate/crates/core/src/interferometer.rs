//! Interferometer circuits, phase sweeps and fringe models.
//!
//! Every circuit starts from `|↑, 0, 0⟩`, carries the phase `φ` on its second
//! element and reverses at `φ = π`:
//!
//! | kind | sequence | phase slot |
//! |------|----------|------------|
//! | `su2` | `D_a(α₀)`, `B(π/4, 0)`, `B(π/4, φ+π)` | second beamsplitter |
//! | `su11_single` | `S_a(r₀/2, 0)`, `S_a(r₀/2, φ)` | second squeezer |
//! | `su11_two` | `T(r₀/2, 0)`, `T(r₀/2, φ)` | second squeezer |
//!
//! followed by a sideband readout pulse. Before readout, mode a holds a
//! coherent state with `n̄ = α₀² cos²(φ/2)`, a squeezed vacuum, or one half of
//! a two-mode squeezed state, the latter two with `sinh r(φ) = sinh r₀ cos(φ/2)`.
//! In all cases the readout mode's mean is `μ(φ) = A cos²(φ/2)` with
//! `A = α₀²` or `sinh²r₀`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fock::{default_n_max, thermal_weights, Mode, ModeConfig, Qubit, TailShape, Truncation, TwoModeQubitState};
use crate::gates::{beamsplitter, displacement, single_mode_squeeze, two_mode_squeeze, FIFTY_FIFTY};
use crate::sideband::{kernel_values, readout_series_with, required_terms, sideband_pulse, Kernel, SidebandKind, SERIES_TAIL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitKind {
    Su2,
    Su11Single,
    Su11Two,
}

impl CircuitKind {
    pub const ALL: [CircuitKind; 3] = [CircuitKind::Su2, CircuitKind::Su11Single, CircuitKind::Su11Two];

    pub fn name(self) -> &'static str {
        match self {
            CircuitKind::Su2 => "su2",
            CircuitKind::Su11Single => "su11_single",
            CircuitKind::Su11Two => "su11_two",
        }
    }

    /// Mean phonon number `⟨N⟩` of the probe entering the phase slot.
    pub fn probe_mean_n(self, param: f64) -> f64 {
        match self {
            CircuitKind::Su2 => param * param,
            CircuitKind::Su11Single => (param / 2.0).sinh().powi(2),
            CircuitKind::Su11Two => 2.0 * (param / 2.0).sinh().powi(2),
        }
    }

    /// Inverse of [`probe_mean_n`](Self::probe_mean_n).
    pub fn param_for_mean_n(self, mean_n: f64) -> Result<f64> {
        ensure(mean_n >= 0.0 && mean_n.is_finite(), || format!("mean_n must be >= 0, got {mean_n}"))?;
        Ok(match self {
            CircuitKind::Su2 => mean_n.sqrt(),
            CircuitKind::Su11Single => 2.0 * mean_n.sqrt().asinh(),
            CircuitKind::Su11Two => 2.0 * (mean_n / 2.0).sqrt().asinh(),
        })
    }

    /// Peak readout-mode mean `A` (at `φ = 0`).
    pub fn amplitude(self, param: f64) -> f64 {
        match self {
            CircuitKind::Su2 => param * param,
            _ => param.sinh().powi(2),
        }
    }

    /// `dA/dparam`
    pub fn amplitude_slope(self, param: f64) -> f64 {
        match self {
            CircuitKind::Su2 => 2.0 * param,
            _ => (2.0 * param).sinh(),
        }
    }

    /// Phonon distribution family of the readout mode.
    pub fn readout_shape(self) -> TailShape {
        match self {
            CircuitKind::Su2 => TailShape::Poisson,
            CircuitKind::Su11Single => TailShape::SqueezedVacuum,
            CircuitKind::Su11Two => TailShape::Thermal,
        }
    }
}

/// Sideband readout pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Readout {
    #[serde(default = "default_readout_mode")]
    pub mode: Mode,
    #[serde(default = "default_readout_kind")]
    pub kind: SidebandKind,
    /// Pulse area `β = ηΩt/2`.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_readout_mode() -> Mode {
    Mode::A
}

fn default_readout_kind() -> SidebandKind {
    SidebandKind::Red
}

fn default_beta() -> f64 {
    FRAC_PI_2
}

impl Default for Readout {
    fn default() -> Self {
        Readout {
            mode: Mode::A,
            kind: SidebandKind::Red,
            beta: FRAC_PI_2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitProgram {
    pub kind: CircuitKind,
    /// `α₀` for `su2`, `r₀` otherwise.
    pub param: f64,
    #[serde(default)]
    pub readout: Readout,
    /// Horizontal offset `φ₀` (rad).
    #[serde(default)]
    pub phi0: f64,
    /// Vertical offset `v₀`.
    #[serde(default)]
    pub v0: f64,
    /// Cutoff override; sized from `param` when absent.
    #[serde(default)]
    pub truncation: Option<Truncation>,
}

impl CircuitProgram {
    pub fn new(kind: CircuitKind, param: f64) -> Result<Self> {
        let p = CircuitProgram {
            kind,
            param,
            readout: Readout::default(),
            phi0: 0.0,
            v0: 0.0,
            truncation: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    pub fn with_offsets(mut self, phi0: f64, v0: f64) -> Self {
        self.phi0 = phi0;
        self.v0 = v0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.param >= 0.0 && self.param.is_finite(), || {
            format!("circuit parameter must be >= 0, got {}", self.param)
        })?;
        ensure((0.0..1.0).contains(&self.v0), || format!("v0 must lie in [0, 1), got {}", self.v0))?;
        ensure(self.phi0.is_finite() && self.readout.beta.is_finite(), || "phi0 and beta must be finite".into())?;
        if let Some(t) = &self.truncation {
            t.validate()?;
        }
        Ok(())
    }

    pub fn probe_mean_n(&self) -> f64 {
        self.kind.probe_mean_n(self.param)
    }

    /// Cutoffs covering the largest state the circuit can produce (at `φ = 0`),
    /// with room for a blue readout quantum.
    pub fn default_truncation(&self) -> Truncation {
        let a = self.kind.amplitude(self.param);
        let (na, nb) = match self.kind {
            CircuitKind::Su2 => {
                let n = default_n_max(a, TailShape::Poisson);
                (n, n)
            }
            CircuitKind::Su11Single => (default_n_max(a, TailShape::SqueezedVacuum), 1),
            CircuitKind::Su11Two => {
                let n = default_n_max(a, TailShape::Thermal);
                (n, n)
            }
        };
        Truncation::with_cutoffs(na + 1, nb + 1).expect("cutoffs >= 2")
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation.unwrap_or_else(|| self.default_truncation())
    }
}

/// Motional state just before readout, starting from `initial`.
fn run_from(program: &CircuitProgram, initial: TwoModeQubitState, phi: f64) -> Result<TwoModeQubitState> {
    let p = program.param;
    match program.kind {
        CircuitKind::Su2 => {
            let s = displacement(&initial, Complex64::new(p, 0.0), Mode::A)?;
            let s = beamsplitter(&s, FIFTY_FIFTY, 0.0)?;
            beamsplitter(&s, FIFTY_FIFTY, phi + PI)
        }
        CircuitKind::Su11Single => {
            let s = single_mode_squeeze(&initial, p / 2.0, 0.0, Mode::A)?;
            single_mode_squeeze(&s, p / 2.0, phi, Mode::A)
        }
        CircuitKind::Su11Two => {
            let s = two_mode_squeeze(&initial, p / 2.0, 0.0)?;
            two_mode_squeeze(&s, p / 2.0, phi)
        }
    }
}

/// State entering the readout at phase `phi` (offsets ignored).
pub fn run_circuit_state(program: &CircuitProgram, phi: f64) -> Result<TwoModeQubitState> {
    program.validate()?;
    let vac = TwoModeQubitState::vacuum(program.truncation(), Qubit::Up)?;
    run_from(program, vac, phi)
}

fn readout(program: &CircuitProgram, state: &TwoModeQubitState) -> Result<f64> {
    let r = &program.readout;
    Ok(sideband_pulse(state, r.beta, r.kind, r.mode)?.p_down())
}

/// `P↓` at phase `phi`, with the program's offsets applied:
/// `v₀ + (1 − v₀)·P↓_ideal(φ − φ₀)`.
pub fn run_circuit(program: &CircuitProgram, phi: f64) -> Result<f64> {
    let s = run_circuit_state(program, phi - program.phi0)?;
    let p = readout(program, &s)?;
    Ok(program.v0 + (1.0 - program.v0) * p)
}

/// `P↓` averaged over a thermal initial state with mean occupations `nbar_a`,
/// `nbar_b`, as a mixture of Fock inputs. Inputs whose joint weight is below
/// `tail_tol` are dropped.
pub fn run_circuit_thermal(program: &CircuitProgram, phi: f64, nbar_a: f64, nbar_b: f64, tail_tol: f64) -> Result<f64> {
    program.validate()?;
    let wa = thermal_weights(nbar_a, tail_tol)?;
    let wb = thermal_weights(nbar_b, tail_tol)?;
    let base = program.truncation();
    let extra_a = 2 * wa.len() + 4;
    let extra_b = 2 * wb.len() + 4;
    let trunc = Truncation::new(
        base.n_max_a + extra_a * (1 + program.kind.amplitude(program.param).ceil() as usize),
        base.n_max_b + extra_b * (1 + program.kind.amplitude(program.param).ceil() as usize),
        base.leak_tol,
    )?;
    let pairs: Vec<(usize, usize, f64)> = wa
        .iter()
        .enumerate()
        .flat_map(|(i, &x)| wb.iter().enumerate().map(move |(j, &y)| (i, j, x * y)))
        .filter(|&(_, _, w)| w > tail_tol)
        .collect();
    let norm: f64 = pairs.iter().map(|p| p.2).sum();
    let parts: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j, w)| {
            let init = TwoModeQubitState::fock(trunc, Qubit::Up, i, j)?;
            let s = run_from(program, init, phi - program.phi0)?;
            Ok(w * readout(program, &s)?)
        })
        .collect();
    let mut p = 0.0;
    for x in parts {
        p += x?;
    }
    Ok(program.v0 + (1.0 - program.v0) * p / norm)
}

/// `r(φ) = asinh(sinh r₀ · cos(φ/2))`.
pub fn tms_phase_param(r0: f64, phi: f64) -> Result<f64> {
    ensure(r0 >= 0.0 && r0.is_finite(), || format!("r0 must be >= 0, got {r0}"))?;
    Ok((r0.sinh() * (phi / 2.0).cos()).asinh())
}

/// Phase accumulated between the modes during a delay: `(ω_a − ω_b)·t`, in `[0, 2π)`.
pub fn delay_to_phase(t_delay: f64, modes: &ModeConfig) -> Result<f64> {
    ensure(t_delay >= 0.0 && t_delay.is_finite(), || format!("delay must be >= 0, got {t_delay}"))?;
    let phi = (modes.splitting() * t_delay).rem_euclid(TAU);
    Ok(if phi >= TAU { 0.0 } else { phi })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub phi: f64,
    pub p_down: f64,
    /// Shots behind `p_down`; `None` for exact probabilities.
    pub shots: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeDataset {
    pub points: Vec<FringePoint>,
    pub program: CircuitProgram,
    pub seed: Option<u64>,
}

impl FringeDataset {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.points.is_empty(), || "fringe dataset is empty".into())?;
        ensure(self.points.windows(2).all(|w| w[1].phi > w[0].phi), || {
            "phi values must be strictly increasing".into()
        })?;
        ensure(self.points.iter().all(|p| (0.0..=1.0).contains(&p.p_down)), || {
            "p_down values must lie in [0, 1]".into()
        })
    }

    pub fn phis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.phi).collect()
    }

    pub fn p_downs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_down).collect()
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    ensure(!grid.is_empty(), || "phase grid is empty".into())?;
    ensure(grid.iter().all(|x| x.is_finite()), || "phase grid must be finite".into())?;
    ensure(grid.windows(2).all(|w| w[1] > w[0]), || "phase grid must be strictly increasing".into())
}

/// Exact fringe over `phi_grid`, or binomially sampled with `shots` per point.
pub fn sweep_fringe(program: &CircuitProgram, phi_grid: &[f64], shots: Option<u64>, seed: u64) -> Result<FringeDataset> {
    check_grid(phi_grid)?;
    program.validate()?;
    if let Some(n) = shots {
        ensure(n > 0, || "shots must be positive".into())?;
    }
    let exact: Vec<Result<f64>> = phi_grid.par_iter().map(|&phi| run_circuit(program, phi)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(phi_grid.len());
    for (&phi, p) in phi_grid.iter().zip(exact) {
        let p = p?.clamp(0.0, 1.0);
        let p_down = match shots {
            None => p,
            Some(n) => {
                let dist = Binomial::new(n, p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                dist.sample(&mut rng) as f64 / n as f64
            }
        };
        points.push(FringePoint { phi, p_down, shots });
    }
    Ok(FringeDataset {
        points,
        program: program.clone(),
        seed: shots.map(|_| seed),
    })
}

/// `n` equally spaced phases over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

// ---------------------------------------------------------------------------
// fringe models

/// A fringe `P↓(φ)` with a readout pulse area that can be varied.
pub trait FringeModel: Sync {
    fn kind(&self) -> CircuitKind;
    /// `⟨N⟩` of the probe.
    fn mean_n(&self) -> f64;
    fn beta(&self) -> f64;
    fn with_beta(&self, beta: f64) -> Self
    where
        Self: Sized;
    fn p_down(&self, phi: f64) -> Result<f64>;
    /// Slope `dP↓/dφ`; central differences unless overridden.
    fn slope(&self, phi: f64) -> Result<f64> {
        let h = 1e-5;
        Ok((self.p_down(phi + h)? - self.p_down(phi - h)?) / (2.0 * h))
    }
    /// `(P↓, dP↓/dφ)`
    fn value_and_slope(&self, phi: f64) -> Result<(f64, f64)> {
        Ok((self.p_down(phi)?, self.slope(phi)?))
    }
}

/// Closed-form fringe from the readout series.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticFringe {
    pub program: CircuitProgram,
    kernel: Kernel,
    /// Per-level transfer probabilities for the current pulse.
    levels: Vec<f64>,
}

/// Fringe value and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeEval {
    pub p: f64,
    pub d_phi: f64,
    pub d_param: f64,
    pub d_phi0: f64,
    pub d_v0: f64,
}

impl AnalyticFringe {
    pub fn new(program: CircuitProgram, kernel: Kernel) -> Result<Self> {
        program.validate()?;
        let a = program.kind.amplitude(program.param);
        let n_terms = required_terms(program.kind.readout_shape(), a, SERIES_TAIL * 1e-2)?
            + matches!(program.readout.kind, SidebandKind::Blue) as usize;
        let mut m = AnalyticFringe {
            program,
            kernel,
            levels: Vec::new(),
        };
        m.levels = m.compute_levels(n_terms);
        Ok(m)
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    fn compute_levels(&self, n_terms: usize) -> Vec<f64> {
        let kernel = match self.program.kind {
            CircuitKind::Su11Two => self.kernel,
            _ => Kernel::Corrected,
        };
        let r = &self.program.readout;
        kernel_values(kernel, r.kind, r.beta, n_terms)
    }

    /// Readout-mode occupation `c(x)` with `μ = A·c` and `dc/dx`.
    fn occupation(&self, x: f64) -> (f64, f64) {
        let bright_a = !(self.program.kind == CircuitKind::Su2 && self.program.readout.mode == Mode::B);
        let (s, c) = (x / 2.0).sin_cos();
        if bright_a {
            (c * c, -x.sin() / 2.0)
        } else {
            (s * s, x.sin() / 2.0)
        }
    }

    pub fn eval(&self, phi: f64) -> Result<FringeEval> {
        let prog = &self.program;
        if prog.kind == CircuitKind::Su11Single && prog.readout.mode == Mode::B {
            return Err(Error::Degenerate("single-mode circuit leaves mode b empty".into()));
        }
        let x = phi - prog.phi0;
        let a = prog.kind.amplitude(prog.param);
        let (c, dc) = self.occupation(x);
        let mu = a * c;
        let rv = readout_series_with(prog.kind.readout_shape(), mu, &self.levels)?;
        let scale = 1.0 - prog.v0;
        let d_phi = scale * rv.dp_dmu * a * dc;
        Ok(FringeEval {
            p: prog.v0 + scale * rv.p_down,
            d_phi,
            d_param: scale * rv.dp_dmu * prog.kind.amplitude_slope(prog.param) * c,
            d_phi0: -d_phi,
            d_v0: 1.0 - rv.p_down,
        })
    }
}

impl FringeModel for AnalyticFringe {
    fn kind(&self) -> CircuitKind {
        self.program.kind
    }

    fn mean_n(&self) -> f64 {
        self.program.probe_mean_n()
    }

    fn beta(&self) -> f64 {
        self.program.readout.beta
    }

    fn with_beta(&self, beta: f64) -> Self {
        let mut m = self.clone();
        m.program.readout.beta = beta;
        m.levels = m.compute_levels(self.levels.len());
        m
    }

    fn p_down(&self, phi: f64) -> Result<f64> {
        Ok(self.eval(phi)?.p)
    }

    fn slope(&self, phi: f64) -> Result<f64> {
        Ok(self.eval(phi)?.d_phi)
    }

    fn value_and_slope(&self, phi: f64) -> Result<(f64, f64)> {
        let e = self.eval(phi)?;
        Ok((e.p, e.d_phi))
    }
}

/// Fringe evaluated by full state-vector simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedFringe {
    pub program: CircuitProgram,
}

impl SimulatedFringe {
    pub fn new(program: CircuitProgram) -> Result<Self> {
        program.validate()?;
        Ok(SimulatedFringe { program })
    }
}

impl FringeModel for SimulatedFringe {
    fn kind(&self) -> CircuitKind {
        self.program.kind
    }

    fn mean_n(&self) -> f64 {
        self.program.probe_mean_n()
    }

    fn beta(&self) -> f64 {
        self.program.readout.beta
    }

    fn with_beta(&self, beta: f64) -> Self {
        let mut m = self.clone();
        m.program.readout.beta = beta;
        m
    }

    fn p_down(&self, phi: f64) -> Result<f64> {
        run_circuit(&self.program, phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fidelity, number_stats, NumberOp};

    fn vacuum_like(state: &TwoModeQubitState) -> TwoModeQubitState {
        TwoModeQubitState::vacuum(*state.truncation(), Qubit::Up).unwrap()
    }

    #[test]
    fn every_circuit_reverses_at_pi() {
        for (kind, p) in [(CircuitKind::Su2, 3.0), (CircuitKind::Su11Single, 1.2), (CircuitKind::Su11Two, 1.0)] {
            let prog = CircuitProgram::new(kind, p).unwrap();
            let s = run_circuit_state(&prog, PI).unwrap();
            if kind == CircuitKind::Su2 {
                // mode a empty, coherent state now in mode b
                assert!(number_stats(&s, NumberOp::ModeA).unwrap().mean < 1e-8);
            } else {
                assert!(fidelity(&s, &vacuum_like(&s)).unwrap() > 1.0 - 1e-9, "{kind:?}");
            }
            assert!(run_circuit(&prog, PI).unwrap() < 1e-9);
        }
    }

    #[test]
    fn phase_law_of_two_mode_circuit() {
        let r0: f64 = 1.0;
        let prog = CircuitProgram::new(CircuitKind::Su11Two, r0).unwrap();
        for k in 0..9 {
            let phi = k as f64 * TAU / 8.0;
            let s = run_circuit_state(&prog, phi).unwrap();
            let n = number_stats(&s, NumberOp::ModeA).unwrap().mean;
            let r = tms_phase_param(r0, phi).unwrap();
            assert!((n - r.sinh().powi(2)).abs() < 1e-8 * (1.0 + n), "phi={phi}");
        }
    }

    #[test]
    fn phase_law_of_single_mode_circuit() {
        let r0: f64 = 1.2;
        let prog = CircuitProgram::new(CircuitKind::Su11Single, r0).unwrap();
        for k in 0..9 {
            let phi = k as f64 * TAU / 8.0;
            let s = run_circuit_state(&prog, phi).unwrap();
            let n = number_stats(&s, NumberOp::ModeA).unwrap().mean;
            let expect = (r0.sinh() * (phi / 2.0).cos()).powi(2);
            assert!((n - expect).abs() < 1e-8 * (1.0 + n), "phi={phi}");
        }
    }

    #[test]
    fn su2_readout_mean() {
        let prog = CircuitProgram::new(CircuitKind::Su2, 2.0).unwrap();
        for k in 0..8 {
            let phi = k as f64 * 0.7;
            let s = run_circuit_state(&prog, phi).unwrap();
            let n = number_stats(&s, NumberOp::ModeA).unwrap().mean;
            assert!((n - 4.0 * (phi / 2.0).cos().powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn tms_phase_param_values() {
        assert!((tms_phase_param(0.7, 0.0).unwrap() - 0.7).abs() < 1e-15);
        assert!(tms_phase_param(0.7, PI).unwrap().abs() < 1e-15);
        let r = tms_phase_param(1.3229, FRAC_PI_2).unwrap();
        assert!((r - 1.037036).abs() < 1e-6);
        assert!(tms_phase_param(-1.0, 0.0).is_err());
    }

    #[test]
    fn delay_phase() {
        let m = ModeConfig::new(TAU * 1.80e6, TAU * 1.833e6, TAU * 2.63e6).unwrap();
        assert_eq!(delay_to_phase(0.0, &m).unwrap(), 0.0);
        let half = 1.0 / (2.0 * 33e3);
        assert!((delay_to_phase(half, &m).unwrap() - PI).abs() < 1e-6);
        let full = delay_to_phase(2.0 * half, &m).unwrap();
        assert!(full < 1e-6 || (TAU - full) < 1e-6);
        assert!(delay_to_phase(-1.0, &m).is_err());
    }

    #[test]
    fn analytic_matches_simulation() {
        for (kind, p) in [(CircuitKind::Su2, 2.0), (CircuitKind::Su11Single, 1.0), (CircuitKind::Su11Two, 1.2)] {
            let prog = CircuitProgram::new(kind, p).unwrap().with_offsets(0.1, 0.05);
            let model = AnalyticFringe::new(prog.clone(), Kernel::Corrected).unwrap();
            for k in 0..12 {
                let phi = k as f64 * TAU / 12.0;
                let sim = run_circuit(&prog, phi).unwrap();
                assert!((model.p_down(phi).unwrap() - sim).abs() < 1e-9, "{kind:?} phi={phi}");
            }
        }
    }

    #[test]
    fn analytic_partials_match_differences() {
        let h = 1e-6;
        for (kind, p) in [(CircuitKind::Su2, 2.0), (CircuitKind::Su11Single, 0.8), (CircuitKind::Su11Two, 1.1)] {
            let prog = CircuitProgram::new(kind, p).unwrap().with_offsets(0.2, 0.1);
            let m = AnalyticFringe::new(prog.clone(), Kernel::Corrected).unwrap();
            let phi = 1.3;
            let e = m.eval(phi).unwrap();
            let mut hi = prog.clone();
            hi.param += h;
            let mut lo = prog.clone();
            lo.param -= h;
            let fd = (AnalyticFringe::new(hi, Kernel::Corrected).unwrap().p_down(phi).unwrap()
                - AnalyticFringe::new(lo, Kernel::Corrected).unwrap().p_down(phi).unwrap())
                / (2.0 * h);
            assert!((fd - e.d_param).abs() < 1e-6 * (1.0 + fd.abs()), "{kind:?}");
            let fd = (m.p_down(phi + h).unwrap() - m.p_down(phi - h).unwrap()) / (2.0 * h);
            assert!((fd - e.d_phi).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn sweep_is_deterministic_and_seeded() {
        let prog = CircuitProgram::new(CircuitKind::Su2, 1.5).unwrap();
        let grid = linspace(0.0, TAU, 9);
        let a = sweep_fringe(&prog, &grid, None, 1).unwrap();
        let b = sweep_fringe(&prog, &grid, None, 2).unwrap();
        assert_eq!(a, b);
        let c = sweep_fringe(&prog, &grid, Some(250), 7).unwrap();
        let d = sweep_fringe(&prog, &grid, Some(250), 7).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.seed, Some(7));
        assert!(c.points.iter().all(|p| (p.p_down * 250.0).fract() == 0.0));
        assert!(sweep_fringe(&prog, &[], None, 0).is_err());
        assert!(sweep_fringe(&prog, &[1.0, 0.5], None, 0).is_err());
    }

    #[test]
    fn thermal_mixture_adds_background() {
        let prog = CircuitProgram::new(CircuitKind::Su11Two, 0.6).unwrap();
        let cold = run_circuit(&prog, PI).unwrap();
        let warm = run_circuit_thermal(&prog, PI, 0.05, 0.05, 1e-10).unwrap();
        assert!(cold < 1e-12);
        assert!(warm > 0.01 && warm < 0.1, "{warm}");
        let zero = run_circuit_thermal(&prog, 0.7, 0.0, 0.0, 1e-10).unwrap();
        assert!((zero - run_circuit(&prog, 0.7).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn probe_mean_inverse() {
        for kind in CircuitKind::ALL {
            let p = kind.param_for_mean_n(3.04).unwrap();
            assert!((kind.probe_mean_n(p) - 3.04).abs() < 1e-12);
        }
    }
}
