//! Qubit–motion sideband couplings used for readout.
//!
//! With `σ⁺ = |↓⟩⟨↑|` and per-mode coupling `g = ηΩ/2`:
//!
//! * red:  `H = g(σ⁺a + σ⁻a†)` couples `|↑,n⟩ ↔ |↓,n−1⟩` at angle `β√n`
//! * blue: `H = g(σ⁺a† + σ⁻a)` couples `|↑,n⟩ ↔ |↓,n+1⟩` at angle `β√(n+1)`
//!
//! where `β = g·t`. The resonant case is solved in closed form pair by pair.
//! The two-mode off-resonant case, `g_a(σ⁺a† e^{iδ₁t} + h.c.) + g_b(σ⁺b† e^{iδ₂t} + h.c.)`
//! (or its red analog), has no closed form and is integrated numerically
//! inside the conserved excitation sectors.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fock::{Mode, ModeConfig, TailShape, TwoModeQubitState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SidebandKind {
    Red,
    Blue,
}

impl SidebandKind {
    /// Phonon level of the partner of `|↑, n⟩`, if it exists.
    fn partner(self, n: usize) -> Option<usize> {
        match self {
            SidebandKind::Red => n.checked_sub(1),
            SidebandKind::Blue => Some(n + 1),
        }
    }

    /// `√n` (red) or `√(n+1)` (blue) for the transition starting at `|↑, n⟩`.
    pub fn rate_factor(self, n: usize) -> f64 {
        match self {
            SidebandKind::Red => (n as f64).sqrt(),
            SidebandKind::Blue => ((n + 1) as f64).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidebandConfig {
    pub eta_a: f64,
    pub eta_b: f64,
    /// Carrier Rabi rate Ω (rad/s).
    pub omega_carrier: f64,
    /// Detuning of the drive from mode a's sideband (rad/s).
    pub delta_1: f64,
    /// Detuning of the drive from mode b's sideband (rad/s).
    pub delta_2: f64,
}

impl SidebandConfig {
    pub fn new(eta_a: f64, eta_b: f64, omega_carrier: f64, delta_1: f64, delta_2: f64) -> Result<Self> {
        let cfg = SidebandConfig {
            eta_a,
            eta_b,
            omega_carrier,
            delta_1,
            delta_2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Drive resonant with `resonant`; the other mode is detuned by the mode splitting.
    pub fn from_modes(eta_a: f64, eta_b: f64, omega_carrier: f64, modes: &ModeConfig, resonant: Mode) -> Result<Self> {
        let split = modes.splitting();
        let (d1, d2) = match resonant {
            Mode::A => (0.0, -split),
            Mode::B => (split, 0.0),
        };
        Self::new(eta_a, eta_b, omega_carrier, d1, d2)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.eta_a > 0.0 && self.eta_b > 0.0, || "Lamb-Dicke parameters must be positive".into())?;
        ensure(self.omega_carrier > 0.0 && self.omega_carrier.is_finite(), || {
            "carrier Rabi rate must be positive".into()
        })?;
        ensure(self.delta_1.is_finite() && self.delta_2.is_finite(), || "detunings must be finite".into())
    }

    pub fn eta(&self, mode: Mode) -> f64 {
        match mode {
            Mode::A => self.eta_a,
            Mode::B => self.eta_b,
        }
    }

    pub fn detuning(&self, mode: Mode) -> f64 {
        match mode {
            Mode::A => self.delta_1,
            Mode::B => self.delta_2,
        }
    }

    /// Sideband Rabi rate `Ω_SB = ηΩ`.
    pub fn omega_sb(&self, mode: Mode) -> f64 {
        self.eta(mode) * self.omega_carrier
    }

    /// `g = ηΩ/2`
    pub fn coupling(&self, mode: Mode) -> f64 {
        self.omega_sb(mode) / 2.0
    }

    /// Pulse area `β = ηΩt/2`.
    pub fn beta(&self, mode: Mode, t: f64) -> f64 {
        self.coupling(mode) * t
    }
}

/// Resonant sideband pulse of area `β` on `mode`.
///
/// The pair `(|↑,n⟩, |↓,n'⟩)` rotates by `θ = β·rate_factor(n)`:
/// `c↑ ← cos θ c↑ − i sin θ c↓`, `c↓ ← −i sin θ c↑ + cos θ c↓`. When the
/// partner lies past the cutoff, the transferred part is charged as leak.
pub fn sideband_pulse(
    state: &TwoModeQubitState,
    beta: f64,
    kind: SidebandKind,
    mode: Mode,
) -> Result<TwoModeQubitState> {
    ensure(beta.is_finite(), || "pulse area must be finite".into())?;
    if beta == 0.0 {
        return Ok(state.clone());
    }
    let t = *state.truncation();
    let n_max = t.n_max(mode);
    let other = t.n_max(mode.other());
    let idx = |q: usize, n: usize, o: usize| match mode {
        Mode::A => t.index(q, n, o),
        Mode::B => t.index(q, o, n),
    };
    let mut amps = state.amplitudes().to_vec();
    let mut leak = 0.0;
    let mi = Complex64::new(0.0, -1.0);
    for o in 0..=other {
        // up level n runs one past the cutoff so a blue partner of an up-level
        // outside the space still shows up for the down amplitude it couples to.
        for n_up in 0..=n_max + 1 {
            let Some(n_dn) = kind.partner(n_up) else { continue };
            let theta = beta * kind.rate_factor(n_up);
            let (c, s) = (theta.cos(), theta.sin());
            let up_in = n_up <= n_max;
            let dn_in = n_dn <= n_max;
            match (up_in, dn_in) {
                (true, true) => {
                    let (iu, id) = (idx(0, n_up, o), idx(1, n_dn, o));
                    let (u, d) = (amps[iu], amps[id]);
                    amps[iu] = u * c + mi * s * d;
                    amps[id] = mi * s * u + d * c;
                }
                (true, false) => {
                    let iu = idx(0, n_up, o);
                    leak += (amps[iu] * s).norm_sqr();
                    amps[iu] *= c;
                }
                (false, true) => {
                    let id = idx(1, n_dn, o);
                    leak += (amps[id] * s).norm_sqr();
                    amps[id] *= c;
                }
                (false, false) => {}
            }
        }
    }
    TwoModeQubitState::from_parts_unchecked(t, amps, state.norm_leak()).charge_leak(leak, "sideband")
}

/// Resonant single-mode sideband evolution for a duration `t`.
pub fn sideband_evolve(
    state: &TwoModeQubitState,
    cfg: &SidebandConfig,
    t: f64,
    kind: SidebandKind,
    mode: Mode,
) -> Result<TwoModeQubitState> {
    cfg.validate()?;
    ensure(t >= 0.0, || format!("evolution time must be >= 0, got {t}"))?;
    sideband_pulse(state, cfg.beta(mode, t), kind, mode)
}

// ---------------------------------------------------------------------------
// off-resonant two-mode evolution

/// Step control for the off-resonant integrator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    /// Accept once `1 − fidelity` between successive halvings drops below this.
    pub tol: f64,
    pub max_halvings: usize,
    /// Steps per inverse fastest rate in the first attempt.
    pub steps_per_rate: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            tol: 1e-8,
            max_halvings: 6,
            steps_per_rate: 50.0,
        }
    }
}

/// A conserved block: up states with `n_a + n_b = up`, down states with `down`.
struct Sector {
    up: Option<usize>,
    down: Option<usize>,
    /// (up slot, down slot, coupling, mode 0/1)
    links: Vec<(usize, usize, f64, usize)>,
}

impl Sector {
    fn n_up(&self) -> usize {
        self.up.map_or(0, |u| u + 1)
    }

    fn len(&self) -> usize {
        self.n_up() + self.down.map_or(0, |d| d + 1)
    }

    /// `(qubit, n_a, n_b)` for a slot.
    fn basis(&self, slot: usize) -> (usize, usize, usize) {
        if slot < self.n_up() {
            let u = self.up.unwrap();
            (0, slot, u - slot)
        } else {
            let d = self.down.unwrap();
            let na = slot - self.n_up();
            (1, na, d - na)
        }
    }
}

fn sectors(kind: SidebandKind, total_max: usize, ga: f64, gb: f64) -> Vec<Sector> {
    let mut out = Vec::new();
    match kind {
        SidebandKind::Blue => {
            out.push(Sector {
                up: None,
                down: Some(0),
                links: Vec::new(),
            });
            for c in 0..=total_max {
                let mut links = Vec::new();
                for i in 0..=c {
                    links.push((i, i + 1, ga * ((i + 1) as f64).sqrt(), 0));
                    links.push((i, i, gb * ((c - i + 1) as f64).sqrt(), 1));
                }
                out.push(Sector {
                    up: Some(c),
                    down: Some(c + 1),
                    links,
                });
            }
        }
        SidebandKind::Red => {
            out.push(Sector {
                up: Some(0),
                down: None,
                links: Vec::new(),
            });
            for k in 1..=total_max + 1 {
                let mut links = Vec::new();
                for i in 0..=k {
                    if i >= 1 {
                        links.push((i, i - 1, ga * (i as f64).sqrt(), 0));
                    }
                    if k - i >= 1 {
                        links.push((i, i, gb * ((k - i) as f64).sqrt(), 1));
                    }
                }
                out.push(Sector {
                    up: Some(k),
                    down: Some(k - 1),
                    links,
                });
            }
        }
    }
    out
}

fn derivative(sec: &Sector, psi: &[Complex64], phases: [Complex64; 2], out: &mut [Complex64]) {
    out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    let nu = sec.n_up();
    let mi = Complex64::new(0.0, -1.0);
    for &(u, d, c, m) in &sec.links {
        let e = phases[m];
        out[nu + d] += mi * c * e * psi[u];
        out[u] += mi * c * e.conj() * psi[nu + d];
    }
}

fn rk4_step(sec: &Sector, psi: &mut [Complex64], t: f64, h: f64, deltas: [f64; 2], work: &mut [Vec<Complex64>; 5]) {
    let ph = |tt: f64| [Complex64::from_polar(1.0, deltas[0] * tt), Complex64::from_polar(1.0, deltas[1] * tt)];
    let [k1, k2, k3, k4, tmp] = work;
    derivative(sec, psi, ph(t), k1);
    for i in 0..psi.len() {
        tmp[i] = psi[i] + k1[i] * (h / 2.0);
    }
    derivative(sec, tmp, ph(t + h / 2.0), k2);
    for i in 0..psi.len() {
        tmp[i] = psi[i] + k2[i] * (h / 2.0);
    }
    derivative(sec, tmp, ph(t + h / 2.0), k3);
    for i in 0..psi.len() {
        tmp[i] = psi[i] + k3[i] * h;
    }
    derivative(sec, tmp, ph(t + h), k4);
    for i in 0..psi.len() {
        psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
    }
}

/// Integrates one sector through `times`; returns the final vector and the
/// in-cutoff down population at each time.
fn integrate_sector(
    sec: &Sector,
    psi0: &[Complex64],
    times: &[f64],
    deltas: [f64; 2],
    h_max: f64,
    inside: &dyn Fn(usize) -> bool,
) -> (Vec<Complex64>, Vec<f64>) {
    let n = psi0.len();
    let mut psi = psi0.to_vec();
    let mut work: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); n]);
    let nu = sec.n_up();
    let mut pd = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &target in times {
        let span = target - now;
        if span > 0.0 {
            let steps = (span / h_max).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for k in 0..steps {
                rk4_step(sec, &mut psi, now + k as f64 * h, h, deltas, &mut work);
            }
            now = target;
        }
        pd.push((nu..n).filter(|&s| inside(s)).map(|s| psi[s].norm_sqr()).sum());
    }
    (psi, pd)
}

fn sector_infidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    if na == 0.0 && nb == 0.0 {
        return 0.0;
    }
    let ov: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    (1.0 - ov.norm_sqr() / (na * nb)).max(0.0)
}

struct OffresRun {
    state: TwoModeQubitState,
    p_down: Vec<f64>,
}

fn offres_run(
    state: &TwoModeQubitState,
    cfg: &SidebandConfig,
    times: &[f64],
    kind: SidebandKind,
    control: StepControl,
) -> Result<OffresRun> {
    cfg.validate()?;
    ensure(!times.is_empty(), || "time grid is empty".into())?;
    ensure(times[0] >= 0.0 && times.windows(2).all(|w| w[1] >= w[0]), || {
        "times must be non-negative and non-decreasing".into()
    })?;
    let tr = *state.truncation();
    let total_max = tr.n_max_a + tr.n_max_b;
    let (ga, gb) = (cfg.coupling(Mode::A), cfg.coupling(Mode::B));
    let deltas = [cfg.delta_1, cfg.delta_2];
    let fastest = cfg
        .delta_1
        .abs()
        .max(cfg.delta_2.abs())
        .max(2.0 * ga.max(gb) * ((total_max + 2) as f64).sqrt());
    let h0 = 1.0 / (control.steps_per_rate * fastest);

    let amps = state.amplitudes();
    let secs = sectors(kind, total_max, ga, gb);
    let results: Vec<Result<Option<(Vec<(usize, Complex64)>, f64, Vec<f64>)>>> = secs
        .par_iter()
        .map(|sec| {
            let map: Vec<Option<usize>> = (0..sec.len())
                .map(|s| {
                    let (q, na, nb) = sec.basis(s);
                    (na <= tr.n_max_a && nb <= tr.n_max_b).then(|| tr.index(q, na, nb))
                })
                .collect();
            let psi0: Vec<Complex64> = map
                .iter()
                .map(|m| m.map_or(Complex64::new(0.0, 0.0), |i| amps[i]))
                .collect();
            if psi0.iter().all(|z| z.norm_sqr() == 0.0) {
                return Ok(None);
            }
            let inside = |s: usize| map[s].is_some();
            let (psi, pd) = if sec.links.is_empty() {
                let nu = sec.n_up();
                let p: f64 = (nu..sec.len()).filter(|&s| inside(s)).map(|s| psi0[s].norm_sqr()).sum();
                (psi0.clone(), vec![p; times.len()])
            } else {
                let mut h = h0;
                let mut prev = integrate_sector(sec, &psi0, times, deltas, h, &inside);
                let mut halvings = 0;
                loop {
                    h /= 2.0;
                    let next = integrate_sector(sec, &psi0, times, deltas, h, &inside);
                    let infid = sector_infidelity(&prev.0, &next.0);
                    let dp = prev.1.iter().zip(&next.1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if infid < control.tol && dp < control.tol.sqrt() {
                        break next;
                    }
                    halvings += 1;
                    if halvings > control.max_halvings {
                        return Err(Error::Integrator(format!(
                            "step halving disagreement {infid:.3e} after {halvings} halvings"
                        )));
                    }
                    prev = next;
                }
            };
            let mut writes = Vec::new();
            let mut leak = 0.0;
            for (s, z) in psi.into_iter().enumerate() {
                match map[s] {
                    Some(i) => writes.push((i, z)),
                    None => leak += z.norm_sqr(),
                }
            }
            Ok(Some((writes, leak, pd)))
        })
        .collect();

    let mut out = vec![Complex64::new(0.0, 0.0); tr.len()];
    let mut leak = 0.0;
    let mut p_down = vec![0.0; times.len()];
    for r in results {
        if let Some((writes, l, pd)) = r? {
            for (i, z) in writes {
                out[i] = z;
            }
            leak += l;
            for (acc, p) in p_down.iter_mut().zip(pd) {
                *acc += p;
            }
        }
    }
    let state = TwoModeQubitState::from_parts_unchecked(tr, out, state.norm_leak()).charge_leak(leak, "sideband_offres")?;
    Ok(OffresRun { state, p_down })
}

/// Two-mode sideband evolution with both modes' detunings, integrated from 0 to `t`.
pub fn sideband_evolve_offres(
    state: &TwoModeQubitState,
    cfg: &SidebandConfig,
    t: f64,
    kind: SidebandKind,
) -> Result<TwoModeQubitState> {
    ensure(t >= 0.0, || format!("evolution time must be >= 0, got {t}"))?;
    if t == 0.0 {
        return Ok(state.clone());
    }
    Ok(offres_run(state, cfg, &[t], kind, StepControl::default())?.state)
}

/// `P↓` at each of `times` under the two-mode off-resonant evolution.
pub fn offres_trajectory(
    state: &TwoModeQubitState,
    cfg: &SidebandConfig,
    times: &[f64],
    kind: SidebandKind,
) -> Result<Vec<f64>> {
    offres_trajectory_with(state, cfg, times, kind, StepControl::default())
}

pub fn offres_trajectory_with(
    state: &TwoModeQubitState,
    cfg: &SidebandConfig,
    times: &[f64],
    kind: SidebandKind,
    control: StepControl,
) -> Result<Vec<f64>> {
    Ok(offres_run(state, cfg, times, kind, control)?.p_down)
}

// ---------------------------------------------------------------------------
// analytic signals

fn check_distribution(p: &[f64]) -> Result<()> {
    ensure(!p.is_empty(), || "population vector is empty".into())?;
    ensure(p.iter().all(|&x| x >= -1e-12 && x.is_finite()), || "populations must be non-negative".into())?;
    let s: f64 = p.iter().sum();
    ensure((s - 1.0).abs() <= 1e-6, || format!("populations sum to {s}, expected 1"))
}

/// Blue-sideband transfer from `|↑⟩ ⊗ Σ P(n)|n⟩⟨n|`:
/// `P↓(t) = ½[1 − Σ P(n) cos(Ω_SB √(n+1) t)]`, so `P↓(0) = 0`.
pub fn rabi_signal(populations: &[f64], omega_sb: f64, times: &[f64]) -> Result<Vec<f64>> {
    check_distribution(populations)?;
    ensure(omega_sb > 0.0, || "sideband Rabi rate must be positive".into())?;
    let rates: Vec<f64> = (0..populations.len()).map(|n| omega_sb * ((n + 1) as f64).sqrt()).collect();
    Ok(times
        .iter()
        .map(|&t| {
            // ½(1 − cos x) = sin²(x/2), exact at t = 0
            populations
                .iter()
                .zip(&rates)
                .map(|(p, w)| p * (w * t / 2.0).sin().powi(2))
                .sum()
        })
        .collect())
}

/// Readout kernel of the analytic series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Transfer probability `sin²(β√n)` per Fock level.
    #[default]
    Corrected,
    /// `1 − cos(β√n)` per Fock level, without the half-angle.
    SingleCosine,
}

/// Phonon distribution of a probe as a function of its mean `μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub p: Vec<f64>,
    /// `dP(n)/dμ`
    pub dp: Vec<f64>,
}

/// Tail mass left out of a series.
pub const SERIES_TAIL: f64 = 1e-10;

/// Streams `(P(n), dP(n)/dμ)` by recurrence.
struct WeightStream {
    shape: TailShape,
    mu: f64,
    n: usize,
    // previous weight, and for the squeezed family C(2k,k)/4^k · q^k / √s
    prev: f64,
    aux: f64,
    ln_mu: f64,
}

impl WeightStream {
    fn new(shape: TailShape, mu: f64) -> Self {
        WeightStream {
            shape,
            mu,
            n: 0,
            prev: 0.0,
            aux: 0.0,
            ln_mu: mu.ln(),
        }
    }
}

impl Iterator for WeightStream {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        let (n, mu) = (self.n, self.mu);
        let s = 1.0 + mu;
        let item = match self.shape {
            TailShape::Poisson => {
                let p = if mu < 700.0 {
                    if n == 0 {
                        (-mu).exp()
                    } else {
                        self.prev * mu / n as f64
                    }
                } else {
                    // e^{−μ} underflows; aux carries ln n!
                    if n > 0 {
                        self.aux += (n as f64).ln();
                    }
                    (-mu + n as f64 * self.ln_mu - self.aux).exp()
                };
                let dp = if n == 0 { -p } else { self.prev - p };
                self.prev = p;
                (p, dp)
            }
            TailShape::Thermal => {
                let p = if n == 0 { 1.0 / s } else { self.prev * mu / s };
                let dp = if n == 0 { -p / s } else { (n as f64 * self.prev - (n + 1) as f64 * p) / s };
                self.prev = p;
                (p, dp)
            }
            TailShape::SqueezedVacuum => {
                if n % 2 == 1 {
                    (0.0, 0.0)
                } else {
                    let k = n / 2;
                    let q = mu / s;
                    // aux holds C(2k,k)/4^k · q^(k−1) / √s for the derivative term
                    let p = if k == 0 {
                        self.aux = 1.0 / s.sqrt();
                        1.0 / s.sqrt()
                    } else {
                        let ratio = (2 * k - 1) as f64 / (2 * k) as f64;
                        self.aux = self.prev * ratio;
                        self.aux * q
                    };
                    let lower = if k == 0 { 0.0 } else { k as f64 * self.aux / (s * s) };
                    let dp = lower - 0.5 * p / s;
                    self.prev = p;
                    (p, dp)
                }
            }
        };
        self.n += 1;
        Some(item)
    }
}

/// `n_terms` weights (and their μ-derivatives) of a Poisson, thermal or
/// squeezed-vacuum distribution with mean `mu`.
pub fn weights(shape: TailShape, mu: f64, n_terms: usize) -> Result<Weights> {
    ensure(mu >= 0.0 && mu.is_finite(), || format!("mean occupation must be >= 0, got {mu}"))?;
    ensure(n_terms >= 1, || "need at least one series term".into())?;
    let (p, dp) = WeightStream::new(shape, mu).take(n_terms).unzip();
    Ok(Weights { p, dp })
}

/// Smallest number of terms whose omitted tail is below `tail`.
pub fn required_terms(shape: TailShape, mu: f64, tail: f64) -> Result<usize> {
    ensure(tail > 0.0 && tail < 1.0, || "tail must lie in (0, 1)".into())?;
    ensure(mu >= 0.0 && mu.is_finite(), || format!("mean occupation must be >= 0, got {mu}"))?;
    let mut cum = 0.0;
    for (n, (p, _)) in WeightStream::new(shape, mu).enumerate() {
        cum += p;
        if 1.0 - cum < tail && n as f64 >= mu {
            return Ok(n + 1);
        }
        if n > 10_000_000 {
            break;
        }
    }
    Err(Error::SeriesTruncation(format!("mean {mu} needs too many terms")))
}

/// Per-level transfer probabilities `k(n)` for a readout pulse.
pub fn kernel_values(kernel: Kernel, readout: SidebandKind, beta: f64, n_terms: usize) -> Vec<f64> {
    (0..n_terms)
        .map(|n| {
            let theta = beta * readout.rate_factor(n);
            match kernel {
                Kernel::Corrected => theta.sin().powi(2),
                Kernel::SingleCosine => 1.0 - theta.cos(),
            }
        })
        .collect()
}

/// Down-state probability after a readout pulse, with its `μ`-derivative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutValue {
    pub p_down: f64,
    pub dp_dmu: f64,
}

/// `P↓ = Σ P(n) k(n)` with `k` from [`kernel_values`]. The sum runs directly
/// over the levels, so small signals keep full relative precision, and stops
/// once the remaining weight is negligible.
pub fn readout_series_with(shape: TailShape, mu: f64, kernel: &[f64]) -> Result<ReadoutValue> {
    ensure(mu >= 0.0 && mu.is_finite(), || format!("mean occupation must be >= 0, got {mu}"))?;
    let mut p_down = 0.0;
    let mut dp_dmu = 0.0;
    let mut cum = 0.0;
    for (n, (p, dp)) in WeightStream::new(shape, mu).take(kernel.len()).enumerate() {
        cum += p;
        p_down += p * kernel[n];
        dp_dmu += dp * kernel[n];
        if 1.0 - cum < 1e-16 && n as f64 > 2.0 * mu + 10.0 {
            return Ok(ReadoutValue { p_down, dp_dmu });
        }
    }
    let missing = 1.0 - cum;
    if missing > SERIES_TAIL {
        return Err(Error::SeriesTruncation(format!(
            "{} terms leave tail {missing:.3e} at mean {mu}",
            kernel.len()
        )));
    }
    Ok(ReadoutValue { p_down, dp_dmu })
}

pub fn readout_series(
    shape: TailShape,
    mu: f64,
    beta: f64,
    readout: SidebandKind,
    kernel: Kernel,
    n_terms: usize,
) -> Result<ReadoutValue> {
    readout_series_with(shape, mu, &kernel_values(kernel, readout, beta, n_terms))
}

/// Spin projector `⟨X⟩ = P↑` after a red pulse on one mode of a two-mode
/// squeezed state with `λ = sinh²r`; the marginal is thermal with weights
/// `λⁿ/(1+λ)^{n+1}`. Returns `(⟨X⟩, d⟨X⟩/dλ)`.
pub fn rsb_model_tms(lambda: f64, beta: f64, n_terms: usize, kernel: Kernel) -> Result<(f64, f64)> {
    let v = readout_series(TailShape::Thermal, lambda, beta, SidebandKind::Red, kernel, n_terms)?;
    Ok((1.0 - v.p_down, -v.dp_dmu))
}

/// `⟨X⟩ = e^{−α²} Σ α^{2n}/n! cos²(β√n)` and its derivative in `α`.
pub fn rsb_model_coherent(alpha: f64, beta: f64, n_terms: usize) -> Result<(f64, f64)> {
    ensure(alpha >= 0.0, || format!("alpha must be >= 0, got {alpha}"))?;
    let v = readout_series(
        TailShape::Poisson,
        alpha * alpha,
        beta,
        SidebandKind::Red,
        Kernel::Corrected,
        n_terms,
    )?;
    Ok((1.0 - v.p_down, -v.dp_dmu * 2.0 * alpha))
}

/// Squeezed-vacuum analog with `n̄ = sinh²r`; derivative with respect to `n̄`.
pub fn rsb_model_squeezed(nbar: f64, beta: f64, n_terms: usize) -> Result<(f64, f64)> {
    let v = readout_series(TailShape::SqueezedVacuum, nbar, beta, SidebandKind::Red, Kernel::Corrected, n_terms)?;
    Ok((1.0 - v.p_down, -v.dp_dmu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fidelity, Qubit, Truncation};
    use crate::gates::{displacement, single_mode_squeeze, two_mode_squeeze};
    use std::f64::consts::{PI, TAU};

    fn trunc(a: usize, b: usize) -> Truncation {
        Truncation::with_cutoffs(a, b).unwrap()
    }

    fn cfg() -> SidebandConfig {
        SidebandConfig::new(0.1, 0.1, TAU * 100e3, 0.0, TAU * 33e3).unwrap()
    }

    #[test]
    fn red_on_ground_is_trivial() {
        let s = TwoModeQubitState::vacuum(trunc(5, 5), Qubit::Up).unwrap();
        for t in [0.0, 1e-6, 3.3e-5] {
            let out = sideband_evolve(&s, &cfg(), t, SidebandKind::Red, Mode::A).unwrap();
            assert_eq!(out.p_down(), 0.0);
        }
    }

    #[test]
    fn red_pi_pulse_on_one_phonon() {
        let c = cfg();
        let s = TwoModeQubitState::fock(trunc(5, 5), Qubit::Up, 1, 0).unwrap();
        let t = PI / c.omega_sb(Mode::A);
        let out = sideband_evolve(&s, &c, t, SidebandKind::Red, Mode::A).unwrap();
        assert!(out.probability(Qubit::Down, 0, 0) > 1.0 - 1e-12);
    }

    #[test]
    fn blue_from_ground_oscillates_at_sideband_rate() {
        let c = cfg();
        let s = TwoModeQubitState::vacuum(trunc(5, 5), Qubit::Up).unwrap();
        for k in 0..20 {
            let t = k as f64 * 1.3e-6;
            let out = sideband_evolve(&s, &c, t, SidebandKind::Blue, Mode::A).unwrap();
            let expect = 0.5 * (1.0 - (c.omega_sb(Mode::A) * t).cos());
            assert!((out.p_down() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn red_rate_scales_with_sqrt_n() {
        for n in 1..6 {
            let s = TwoModeQubitState::fock(trunc(2, 8), Qubit::Up, 0, n).unwrap();
            for k in 0..10 {
                let beta = 0.17 * k as f64;
                let out = sideband_pulse(&s, beta, SidebandKind::Red, Mode::B).unwrap();
                let expect = (beta * (n as f64).sqrt()).sin().powi(2);
                assert!((out.p_down() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blue_at_cutoff_leaks() {
        let s = TwoModeQubitState::fock(trunc(3, 1), Qubit::Up, 3, 0).unwrap();
        let err = sideband_pulse(&s, 0.5, SidebandKind::Blue, Mode::A).unwrap_err();
        assert!(matches!(err, Error::LeakGuard { .. }));
    }

    #[test]
    fn sideband_preserves_norm() {
        let s = TwoModeQubitState::vacuum(trunc(40, 3), Qubit::Up).unwrap();
        let s = displacement(&s, Complex64::new(1.5, 0.2), Mode::A).unwrap();
        for kind in [SidebandKind::Red, SidebandKind::Blue] {
            let out = sideband_pulse(&s, 2.3, kind, Mode::A).unwrap();
            assert!((out.norm_sqr() + out.norm_leak() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rabi_signal_matches_blue_simulation() {
        let c = cfg();
        let alpha = 2.0;
        let s = TwoModeQubitState::vacuum(trunc(40, 1), Qubit::Up).unwrap();
        let s = displacement(&s, Complex64::new(alpha, 0.0), Mode::A).unwrap();
        let w = weights(TailShape::Poisson, alpha * alpha, 41).unwrap();
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 2e-6).collect();
        let sig = rabi_signal(&w.p, c.omega_sb(Mode::A), &times).unwrap();
        assert_eq!(sig[0], 0.0);
        for (t, p) in times.iter().zip(sig) {
            let sim = sideband_evolve(&s, &c, *t, SidebandKind::Blue, Mode::A).unwrap();
            assert!((sim.p_down() - p).abs() < 1e-6);
        }
    }

    #[test]
    fn rabi_signal_refuses_unnormalized() {
        assert!(rabi_signal(&[0.5, 0.4], 1.0, &[0.0]).is_err());
        assert!(rabi_signal(&[1.1, -0.1], 1.0, &[0.0]).is_err());
    }

    #[test]
    fn weights_and_derivatives() {
        for shape in [TailShape::Poisson, TailShape::Thermal, TailShape::SqueezedVacuum] {
            for &mu in &[0.0, 0.3, 3.04] {
                let n = required_terms(shape, mu, 1e-14).unwrap();
                let w = weights(shape, mu, n).unwrap();
                let mean: f64 = w.p.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                assert!((mean - mu).abs() < 1e-9, "{shape:?} {mu}");
                let h = 1e-6;
                let lo = weights(shape, (mu - h).max(0.0), n).unwrap();
                let hi = weights(shape, mu + h, n).unwrap();
                let span = mu + h - (mu - h).max(0.0);
                for k in 0..n.min(20) {
                    let fd = (hi.p[k] - lo.p[k]) / span;
                    assert!((fd - w.dp[k]).abs() < 1e-5, "{shape:?} mu={mu} n={k}");
                }
            }
        }
    }

    #[test]
    fn series_vacuum_and_truncation() {
        let (x, _) = rsb_model_tms(0.0, 1.234, 5, Kernel::Corrected).unwrap();
        assert_eq!(x, 1.0);
        let (x, _) = rsb_model_tms(0.0, 1.234, 5, Kernel::SingleCosine).unwrap();
        assert_eq!(x, 1.0);
        let (x, _) = rsb_model_coherent(0.0, 0.9, 3).unwrap();
        assert_eq!(x, 1.0);
        assert!(matches!(rsb_model_tms(3.04, 1.0, 10, Kernel::Corrected), Err(Error::SeriesTruncation(_))));
    }

    #[test]
    fn series_against_long_brute_force() {
        let lam: f64 = 3.04;
        let beta = 0.8;
        let n = required_terms(TailShape::Thermal, lam, SERIES_TAIL).unwrap();
        let (x, _) = rsb_model_tms(lam, beta, n, Kernel::SingleCosine).unwrap();
        let q = lam / (1.0 + lam);
        let brute: f64 = (0..10_000)
            .map(|k| (beta * (k as f64).sqrt()).cos() * q.powi(k) / (1.0 + lam))
            .sum();
        assert!((x - brute).abs() < 1e-10);
    }

    #[test]
    fn tms_series_matches_simulation() {
        let lam: f64 = 3.04;
        let r = lam.sqrt().asinh();
        let na = crate::fock::default_n_max(lam, TailShape::Thermal);
        let s = TwoModeQubitState::vacuum(trunc(na, na), Qubit::Up).unwrap();
        let s = two_mode_squeeze(&s, r, 0.0).unwrap();
        let n = required_terms(TailShape::Thermal, lam, SERIES_TAIL).unwrap();
        for &beta in &[0.3, 0.9, PI / 2.0] {
            let out = sideband_pulse(&s, beta, SidebandKind::Red, Mode::A).unwrap();
            let (x, _) = rsb_model_tms(lam, beta, n, Kernel::Corrected).unwrap();
            assert!((out.p_down() - (1.0 - x)).abs() < 1e-4);
        }
    }

    #[test]
    fn coherent_and_squeezed_series_match_simulation() {
        let s0 = TwoModeQubitState::vacuum(trunc(120, 1), Qubit::Up).unwrap();
        let coh = displacement(&s0, Complex64::new(2.0, 0.0), Mode::A).unwrap();
        let sq = single_mode_squeeze(&s0, 1.0, 0.0, Mode::A).unwrap();
        let nbar = 1f64.sinh().powi(2);
        for &beta in &[0.4, 1.1] {
            let (x, _) = rsb_model_coherent(2.0, beta, 121).unwrap();
            let sim = sideband_pulse(&coh, beta, SidebandKind::Red, Mode::A).unwrap();
            assert!((sim.p_down() - (1.0 - x)).abs() < 1e-10);
            let (x, _) = rsb_model_squeezed(nbar, beta, 121).unwrap();
            let sim = sideband_pulse(&sq, beta, SidebandKind::Red, Mode::A).unwrap();
            assert!((sim.p_down() - (1.0 - x)).abs() < 1e-10);
        }
    }

    #[test]
    fn offres_identity_at_zero_time() {
        let s = TwoModeQubitState::fock(trunc(4, 4), Qubit::Up, 1, 2).unwrap();
        let out = sideband_evolve_offres(&s, &cfg(), 0.0, SidebandKind::Blue).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn offres_large_splitting_recovers_resonant() {
        let c = SidebandConfig::new(0.1, 0.1, TAU * 100e3, 0.0, TAU * 10e6).unwrap();
        let s = TwoModeQubitState::fock(trunc(6, 6), Qubit::Up, 1, 0).unwrap();
        let t = 7e-6;
        for kind in [SidebandKind::Red, SidebandKind::Blue] {
            let off = sideband_evolve_offres(&s, &c, t, kind).unwrap();
            let on = sideband_evolve(&s, &c, t, kind, Mode::A).unwrap();
            assert!(fidelity(&off, &on).unwrap() > 1.0 - 1e-6, "{kind:?}");
        }
    }

    #[test]
    fn offres_resonant_only_matches_closed_form() {
        // with mode b barely coupled, the integrator reproduces the exact pulse
        let c = SidebandConfig::new(0.1, 1e-9, TAU * 50e3, 0.0, 0.0).unwrap();
        let s = TwoModeQubitState::vacuum(trunc(14, 3), Qubit::Up).unwrap();
        let s = displacement(&s, Complex64::new(0.8, 0.0), Mode::A).unwrap();
        let times: Vec<f64> = (1..15).map(|k| k as f64 * 4e-6).collect();
        let traj = offres_trajectory(&s, &c, &times, SidebandKind::Blue).unwrap();
        for (t, p) in times.iter().zip(traj) {
            let exact = sideband_evolve(&s, &c, *t, SidebandKind::Blue, Mode::A).unwrap();
            assert!((exact.p_down() - p).abs() < 1e-6);
        }
    }

    #[test]
    fn offres_33khz_correction_is_bounded() {
        let c = cfg();
        let s = TwoModeQubitState::vacuum(trunc(6, 6), Qubit::Up).unwrap();
        let times: Vec<f64> = (0..30).map(|k| k as f64 * 2e-6).collect();
        let traj = offres_trajectory(&s, &c, &times, SidebandKind::Blue).unwrap();
        let ideal = rabi_signal(&[1.0], c.omega_sb(Mode::A), &times).unwrap();
        let dev = traj.iter().zip(&ideal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev > 1e-4, "spectator coupling should be visible, got {dev}");
        assert!(dev < 0.5);
        assert_eq!(traj[0], 0.0);
    }

    #[test]
    fn from_modes_splits_detunings() {
        let m = ModeConfig::reference();
        let c = SidebandConfig::from_modes(0.1, 0.1, 1e5, &m, Mode::A).unwrap();
        assert_eq!(c.delta_1, 0.0);
        assert!(((c.delta_1 - c.delta_2).abs() - m.splitting().abs()).abs() < 1e-6);
    }
}
