//! Truncated qubit ⊗ mode-a ⊗ mode-b Hilbert space.
//!
//! Amplitudes are stored qubit-major: index `(q, n_a, n_b)` maps to
//! `(q · (N_a + 1) + n_a) · (N_b + 1) + n_b`, with `q = 0` for |↑⟩ and
//! `q = 1` for |↓⟩. Gates never renormalize; probability pushed past the
//! cutoff is accumulated in [`TwoModeQubitState::norm_leak`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Absolute tolerance on `‖ψ‖² + norm_leak = 1`.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qubit {
    Up,
    Down,
}

impl Qubit {
    pub(crate) fn index(self) -> usize {
        match self {
            Qubit::Up => 0,
            Qubit::Down => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    A,
    B,
}

impl Mode {
    pub fn other(self) -> Mode {
        match self {
            Mode::A => Mode::B,
            Mode::B => Mode::A,
        }
    }
}

/// Which number operator a statistic refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberOp {
    ModeA,
    ModeB,
    /// `n_a + n_b`
    Total,
}

impl From<Mode> for NumberOp {
    fn from(m: Mode) -> Self {
        match m {
            Mode::A => NumberOp::ModeA,
            Mode::B => NumberOp::ModeB,
        }
    }
}

/// Shape of a phonon-number distribution, used to size cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailShape {
    Poisson,
    Thermal,
    SqueezedVacuum,
}

/// Tail probability targeted by [`default_n_max`].
pub const DEFAULT_TAIL: f64 = 1e-12;

/// Cutoff for a mode expected to reach mean occupation `nbar`.
///
/// The base rule `ceil(n̄ + 8√(n̄+1))` covers Poisson-like states. Thermal and
/// squeezed-vacuum tails decay geometrically (ratio `q = n̄/(n̄+1)` per quantum,
/// resp. per pair of quanta), so for those the cutoff is raised until the
/// geometric tail drops below [`DEFAULT_TAIL`].
pub fn default_n_max(nbar: f64, shape: TailShape) -> usize {
    let nbar = nbar.max(0.0);
    let base = (nbar + 8.0 * (nbar + 1.0).sqrt()).ceil() as usize;
    let q = nbar / (nbar + 1.0);
    let geometric = if q > 0.0 {
        (DEFAULT_TAIL.ln() / q.ln()).ceil() as usize
    } else {
        0
    };
    let n = match shape {
        TailShape::Poisson => base,
        TailShape::Thermal => base.max(geometric),
        TailShape::SqueezedVacuum => base.max(2 * geometric),
    };
    n.max(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_max_a: usize,
    pub n_max_b: usize,
    #[serde(default = "default_leak_tol")]
    pub leak_tol: f64,
}

fn default_leak_tol() -> f64 {
    Truncation::DEFAULT_LEAK_TOL
}

impl Truncation {
    pub const DEFAULT_LEAK_TOL: f64 = 1e-8;

    pub fn new(n_max_a: usize, n_max_b: usize, leak_tol: f64) -> Result<Self> {
        let t = Truncation {
            n_max_a,
            n_max_b,
            leak_tol,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_cutoffs(n_max_a: usize, n_max_b: usize) -> Result<Self> {
        Self::new(n_max_a, n_max_b, Self::DEFAULT_LEAK_TOL)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max_a < 1 || self.n_max_b < 1 {
            return Err(Error::InvalidDimension(format!(
                "n_max must be >= 1 (got a={}, b={})",
                self.n_max_a, self.n_max_b
            )));
        }
        ensure(self.leak_tol > 0.0 && self.leak_tol < 1.0, || {
            format!("leak_tol must lie in (0, 1), got {}", self.leak_tol)
        })
    }

    pub fn n_max(&self, mode: Mode) -> usize {
        match mode {
            Mode::A => self.n_max_a,
            Mode::B => self.n_max_b,
        }
    }

    pub fn dim(&self, mode: Mode) -> usize {
        self.n_max(mode) + 1
    }

    /// Number of complex amplitudes, qubit included.
    pub fn len(&self) -> usize {
        2 * (self.n_max_a + 1) * (self.n_max_b + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub(crate) fn index(&self, q: usize, na: usize, nb: usize) -> usize {
        (q * (self.n_max_a + 1) + na) * (self.n_max_b + 1) + nb
    }

    fn same_shape(&self, other: &Truncation) -> bool {
        self.n_max_a == other.n_max_a && self.n_max_b == other.n_max_b
    }
}

/// Angular frequencies of the two motional modes and the qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_0: f64,
}

impl ModeConfig {
    pub fn new(omega_a: f64, omega_b: f64, omega_0: f64) -> Result<Self> {
        ensure(omega_a > 0.0 && omega_b > 0.0 && omega_0 > 0.0, || {
            "mode and qubit frequencies must be positive".into()
        })?;
        ensure(omega_a != omega_b, || "omega_a and omega_b must differ".into())?;
        Ok(ModeConfig {
            omega_a,
            omega_b,
            omega_0,
        })
    }

    /// Radial modes at 2π×1.80 MHz and 2π×1.83 MHz, qubit at 2π×2.63 MHz.
    pub fn reference() -> Self {
        let tau = std::f64::consts::TAU;
        ModeConfig {
            omega_a: tau * 1.80e6,
            omega_b: tau * 1.83e6,
            omega_0: tau * 2.63e6,
        }
    }

    /// `ω_a − ω_b`
    pub fn splitting(&self) -> f64 {
        self.omega_a - self.omega_b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumberStats {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoModeQubitState {
    amps: Vec<Complex64>,
    truncation: Truncation,
    norm_leak: f64,
}

impl TwoModeQubitState {
    pub fn vacuum(truncation: Truncation, qubit: Qubit) -> Result<Self> {
        Self::fock(truncation, qubit, 0, 0)
    }

    /// Product Fock state `|q, n_a, n_b⟩`.
    pub fn fock(truncation: Truncation, qubit: Qubit, na: usize, nb: usize) -> Result<Self> {
        truncation.validate()?;
        if na > truncation.n_max_a || nb > truncation.n_max_b {
            return Err(Error::InvalidDimension(format!(
                "Fock state |{na},{nb}> outside cutoffs ({}, {})",
                truncation.n_max_a, truncation.n_max_b
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); truncation.len()];
        amps[truncation.index(qubit.index(), na, nb)] = Complex64::new(1.0, 0.0);
        Ok(TwoModeQubitState {
            amps,
            truncation,
            norm_leak: 0.0,
        })
    }

    /// Builds a state from raw amplitudes, checking `‖ψ‖² + norm_leak = 1`.
    ///
    /// A state whose leak exceeds the tolerance is accepted but reports
    /// `is_valid() == false`; statistics refuse to operate on it.
    pub fn from_amplitudes(
        truncation: Truncation,
        amps: Vec<Complex64>,
        norm_leak: f64,
    ) -> Result<Self> {
        truncation.validate()?;
        if amps.len() != truncation.len() {
            return Err(Error::InvalidDimension(format!(
                "expected {} amplitudes, got {}",
                truncation.len(),
                amps.len()
            )));
        }
        if !(norm_leak >= 0.0) {
            return Err(Error::InvalidState(format!("negative norm_leak {norm_leak}")));
        }
        let s = TwoModeQubitState {
            amps,
            truncation,
            norm_leak,
        };
        let total = s.norm_sqr() + norm_leak;
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "norm² + leak = {total:.12} (expected 1)"
            )));
        }
        Ok(s)
    }

    pub(crate) fn from_parts_unchecked(
        truncation: Truncation,
        amps: Vec<Complex64>,
        norm_leak: f64,
    ) -> Self {
        TwoModeQubitState {
            amps,
            truncation,
            norm_leak,
        }
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn norm_leak(&self) -> f64 {
        self.norm_leak
    }

    pub fn is_valid(&self) -> bool {
        self.norm_leak <= self.truncation.leak_tol
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, qubit: Qubit, na: usize, nb: usize) -> Complex64 {
        self.amps[self.truncation.index(qubit.index(), na, nb)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probability(&self, qubit: Qubit, na: usize, nb: usize) -> f64 {
        self.amplitude(qubit, na, nb).norm_sqr()
    }

    pub fn qubit_probability(&self, qubit: Qubit) -> f64 {
        let half = self.amps.len() / 2;
        let slice = match qubit {
            Qubit::Up => &self.amps[..half],
            Qubit::Down => &self.amps[half..],
        };
        slice.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn p_down(&self) -> f64 {
        self.qubit_probability(Qubit::Down)
    }

    /// Joint phonon populations `P(n_a, n_b)`, summed over the qubit.
    pub fn joint_populations(&self) -> DMatrix<f64> {
        let t = &self.truncation;
        DMatrix::from_fn(t.n_max_a + 1, t.n_max_b + 1, |na, nb| {
            (0..2)
                .map(|q| self.amps[t.index(q, na, nb)].norm_sqr())
                .sum()
        })
    }

    /// Adds `extra` to the leak counter, refusing once it exceeds tolerance.
    pub(crate) fn charge_leak(mut self, extra: f64, operation: &'static str) -> Result<Self> {
        self.norm_leak += extra.max(0.0);
        if self.norm_leak > self.truncation.leak_tol {
            return Err(Error::LeakGuard {
                operation,
                leak: self.norm_leak,
                tol: self.truncation.leak_tol,
            });
        }
        Ok(self)
    }

    /// Multiplies every amplitude by `exp(i·chi·n_mode)`.
    pub fn rotate_mode(&self, mode: Mode, chi: f64) -> Self {
        if chi == 0.0 {
            return self.clone();
        }
        let t = self.truncation;
        let phases: Vec<Complex64> = (0..t.dim(mode))
            .map(|n| Complex64::from_polar(1.0, chi * n as f64))
            .collect();
        let mut out = self.clone();
        for q in 0..2 {
            for na in 0..=t.n_max_a {
                for nb in 0..=t.n_max_b {
                    let n = if mode == Mode::A { na } else { nb };
                    out.amps[t.index(q, na, nb)] *= phases[n];
                }
            }
        }
        out
    }

    pub fn to_snapshot(&self) -> StateSnapshot {
        let t = &self.truncation;
        let amplitudes = (0..2)
            .map(|q| {
                (0..=t.n_max_a)
                    .map(|na| {
                        (0..=t.n_max_b)
                            .map(|nb| {
                                let a = self.amps[t.index(q, na, nb)];
                                [a.re, a.im]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        StateSnapshot {
            truncation: *t,
            amplitudes,
            norm_leak: self.norm_leak,
        }
    }

    pub fn from_snapshot(snap: &StateSnapshot) -> Result<Self> {
        let t = snap.truncation;
        t.validate()?;
        let shape_ok = snap.amplitudes.len() == 2
            && snap.amplitudes.iter().all(|plane| {
                plane.len() == t.n_max_a + 1 && plane.iter().all(|row| row.len() == t.n_max_b + 1)
            });
        if !shape_ok {
            return Err(Error::InvalidDimension(
                "snapshot amplitude array does not match its truncation".into(),
            ));
        }
        let amps = snap
            .amplitudes
            .iter()
            .flat_map(|plane| plane.iter().flat_map(|row| row.iter()))
            .map(|[re, im]| Complex64::new(*re, *im))
            .collect();
        Self::from_amplitudes(t, amps, snap.norm_leak)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_snapshot())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: StateSnapshot = serde_json::from_str(s)?;
        Self::from_snapshot(&snap)
    }
}

/// JSON form of a state: qubit-major nested `[re, im]` arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub truncation: Truncation,
    pub amplitudes: Vec<Vec<Vec<[f64; 2]>>>,
    pub norm_leak: f64,
}

pub fn make_vacuum(truncation: Truncation, qubit: Qubit) -> Result<TwoModeQubitState> {
    TwoModeQubitState::vacuum(truncation, qubit)
}

/// Annihilation operator on `{|0⟩, …, |n_max⟩}`: `a[n−1, n] = √n`.
pub fn ladder_matrix(n_max: usize) -> Result<DMatrix<f64>> {
    if n_max < 1 {
        return Err(Error::InvalidDimension("ladder_matrix needs n_max >= 1".into()));
    }
    let d = n_max + 1;
    let mut a = DMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = (n as f64).sqrt();
    }
    Ok(a)
}

fn refuse_invalid(state: &TwoModeQubitState) -> Result<()> {
    if state.is_valid() {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "norm_leak {:.3e} exceeds leak_tol {:.3e}",
            state.norm_leak, state.truncation.leak_tol
        )))
    }
}

/// Distribution of the selected number operator, indexed by its eigenvalue.
fn number_distribution(state: &TwoModeQubitState, which: NumberOp) -> Vec<f64> {
    let t = &state.truncation;
    let len = match which {
        NumberOp::ModeA => t.n_max_a + 1,
        NumberOp::ModeB => t.n_max_b + 1,
        NumberOp::Total => t.n_max_a + t.n_max_b + 1,
    };
    let mut p = vec![0.0; len];
    for q in 0..2 {
        for na in 0..=t.n_max_a {
            for nb in 0..=t.n_max_b {
                let w = state.amps[t.index(q, na, nb)].norm_sqr();
                let n = match which {
                    NumberOp::ModeA => na,
                    NumberOp::ModeB => nb,
                    NumberOp::Total => na + nb,
                };
                p[n] += w;
            }
        }
    }
    p
}

/// Mean and variance of `n_a`, `n_b` or `n_a + n_b`.
///
/// Moments are taken over the retained (unnormalized) amplitudes, so a
/// leaked tail simply does not contribute.
pub fn number_stats(state: &TwoModeQubitState, which: NumberOp) -> Result<NumberStats> {
    refuse_invalid(state)?;
    let p = number_distribution(state, which);
    let (m1, m2) = p.iter().enumerate().fold((0.0, 0.0), |(m1, m2), (n, &w)| {
        let n = n as f64;
        (m1 + n * w, m2 + n * n * w)
    });
    Ok(NumberStats {
        mean: m1,
        variance: (m2 - m1 * m1).max(0.0),
    })
}

/// Marginal phonon distribution of one mode; sums to `1 − norm_leak`.
pub fn fock_marginal(state: &TwoModeQubitState, mode: Mode) -> Vec<f64> {
    number_distribution(state, mode.into())
}

/// `⟨s1|s2⟩`
pub fn overlap(s1: &TwoModeQubitState, s2: &TwoModeQubitState) -> Result<Complex64> {
    if !s1.truncation.same_shape(&s2.truncation) {
        return Err(Error::TruncationMismatch(format!(
            "({}, {}) vs ({}, {})",
            s1.truncation.n_max_a, s1.truncation.n_max_b, s2.truncation.n_max_a, s2.truncation.n_max_b
        )));
    }
    Ok(s1
        .amps
        .iter()
        .zip(&s2.amps)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// `|⟨s1|s2⟩|²`
pub fn fidelity(s1: &TwoModeQubitState, s2: &TwoModeQubitState) -> Result<f64> {
    Ok(overlap(s1, s2)?.norm_sqr())
}

/// Purity `Tr ρ²` of one mode's reduced state (qubit and other mode traced out).
pub fn mode_purity(state: &TwoModeQubitState, mode: Mode) -> f64 {
    let t = &state.truncation;
    let keep = t.dim(mode);
    let traced = t.dim(mode.other());
    // Rows: kept mode index; columns: (qubit, traced-mode index).
    let m = DMatrix::from_fn(keep, 2 * traced, |k, c| {
        let (q, o) = (c / traced, c % traced);
        let (na, nb) = if mode == Mode::A { (k, o) } else { (o, k) };
        state.amps[t.index(q, na, nb)]
    });
    let rho = &m * m.adjoint();
    rho.iter().map(|z| z.norm_sqr()).sum()
}

/// Geometric (thermal) weights `n̄ⁿ/(1+n̄)^{n+1}`, cut where the remaining tail
/// falls below `tail_tol` and renormalized to unit sum.
pub fn thermal_weights(nbar: f64, tail_tol: f64) -> Result<Vec<f64>> {
    ensure(nbar >= 0.0 && nbar.is_finite(), || format!("thermal nbar must be >= 0, got {nbar}"))?;
    ensure(tail_tol > 0.0 && tail_tol < 1.0, || "tail_tol must lie in (0, 1)".into())?;
    if nbar == 0.0 {
        return Ok(vec![1.0]);
    }
    let q = nbar / (1.0 + nbar);
    let mut w = Vec::new();
    let mut p = 1.0 / (1.0 + nbar);
    let mut tail = 1.0;
    while tail > tail_tol {
        w.push(p);
        tail -= p;
        p *= q;
        if w.len() > 1_000_000 {
            break;
        }
    }
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}
