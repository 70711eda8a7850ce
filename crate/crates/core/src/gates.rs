//! Displacement, single-mode squeezing, two-mode squeezing and beamsplitter
//! unitaries on the truncated space.
//!
//! Generator conventions (θ, φ are drive phases):
//!
//! | gate | unitary |
//! |------|---------|
//! | `D(α)` on mode m | `exp(α m† − α* m)` |
//! | `S(r, θ)` on mode m | `exp[(r/2)(e^{−iθ} m² − e^{iθ} m†²)]` |
//! | `T(r, θ)` | `exp[r(e^{iθ} a†b† − e^{−iθ} ab)]`, so `T(r,0)\|0,0⟩ = Σ tanhⁿr/cosh r \|n,n⟩` |
//! | `B(χ, φ)` | `exp[χ(e^{−iφ} ab† − e^{iφ} a†b)]`; χ = π/4 is 50/50, χ = π/2 a full swap |
//!
//! Each phase is factored out as a number-operator rotation, e.g.
//! `S(r, θ) = R(θ/2) S(r, 0) R(−θ/2)` with `R(χ) = exp(iχ m†m)`, so only real
//! antisymmetric generators are exponentiated. Those are block diagonal:
//! single-mode gates act on one mode at a time, `T` preserves `n_a − n_b` and
//! `B` preserves `n_a + n_b`. Each block is exponentiated densely on a space
//! padded beyond the cutoff (beamsplitter blocks are exact: a fixed-`N` sector
//! is finite) and amplitude landing past the cutoff is charged to the state's
//! leak counter.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::expm::expm;
use crate::fock::{ladder_matrix, Mode, TwoModeQubitState};

pub const FIFTY_FIFTY: f64 = FRAC_PI_4;

/// Reference coupling rates (rad/s).
pub struct DriveCatalog;

impl DriveCatalog {
    const TAU: f64 = std::f64::consts::TAU;
    /// Fitted displacement coupling, 2π×1.37 kHz.
    pub const DISPLACEMENT: f64 = Self::TAU * 1.37e3;
    /// Maximum fitted single-mode squeezing coupling, 2π×3.99 kHz.
    pub const SMS_MAX: f64 = Self::TAU * 3.99e3;
    /// Maximum fitted two-mode squeezing coupling, 2π×1.15 kHz.
    pub const TMS_MAX: f64 = Self::TAU * 1.15e3;
    /// Calibrated beamsplitter coupling, 2π×0.64 kHz.
    pub const BEAMSPLITTER: f64 = Self::TAU * 0.64e3;
    /// Electrode-voltage predictions for the same drives.
    pub const BEAMSPLITTER_THEORY: f64 = Self::TAU * 0.66e3;
    pub const SMS_THEORY: f64 = Self::TAU * 3.68e3;
    pub const TMS_THEORY: f64 = Self::TAU * 1.09e3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Displacement,
    SmsA,
    SmsB,
    Tms,
    Beamsplitter,
}

/// One primitive drive and the unitary parameter it produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    /// Coupling rate (rad/s).
    pub g: f64,
    /// Duration (s).
    pub t: f64,
    /// Detuning from the interaction resonance (rad/s); only 0 is simulated.
    #[serde(default)]
    pub delta: f64,
    /// Drive phase (rad).
    #[serde(default)]
    pub theta: f64,
    /// |α| for displacements, r for squeezers, χ for the beamsplitter.
    #[serde(default)]
    pub magnitude: f64,
    /// Target of a displacement.
    #[serde(default = "default_mode")]
    pub mode: Mode,
}

fn default_mode() -> Mode {
    Mode::A
}

/// Maps a physical drive onto its gate parameter:
/// α = g·t, r_SMS = g·t, r_TMS = 2·g·t, χ_BS = g·t/2.
pub fn gate_from_drive(kind: GateKind, g: f64, t: f64, theta: f64) -> Result<GateSpec> {
    ensure(g >= 0.0 && t >= 0.0, || format!("g and t must be non-negative (g={g}, t={t})"))?;
    ensure(theta.is_finite(), || "drive phase must be finite".into())?;
    let magnitude = match kind {
        GateKind::Displacement | GateKind::SmsA | GateKind::SmsB => g * t,
        GateKind::Tms => 2.0 * g * t,
        GateKind::Beamsplitter => g * t / 2.0,
    };
    let mode = match kind {
        GateKind::SmsB => Mode::B,
        _ => Mode::A,
    };
    Ok(GateSpec {
        kind,
        g,
        t,
        delta: 0.0,
        theta,
        magnitude,
        mode,
    })
}

impl GateSpec {
    /// Complex displacement `α = |α| e^{iθ}`.
    pub fn alpha(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.theta)
    }

    pub fn apply(&self, state: &TwoModeQubitState) -> Result<TwoModeQubitState> {
        if self.delta != 0.0 {
            return Err(Error::InvalidParameter(
                "only resonant (delta = 0) gates are simulated".into(),
            ));
        }
        match self.kind {
            GateKind::Displacement => displacement(state, self.alpha(), self.mode),
            GateKind::SmsA => single_mode_squeeze(state, self.magnitude, self.theta, Mode::A),
            GateKind::SmsB => single_mode_squeeze(state, self.magnitude, self.theta, Mode::B),
            GateKind::Tms => two_mode_squeeze(state, self.magnitude, self.theta),
            GateKind::Beamsplitter => beamsplitter(state, self.magnitude, self.theta),
        }
    }
}

// ---------------------------------------------------------------------------
// block unitary cache

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum BlockKey {
    Displace { dim: usize, amp: u64 },
    Squeeze { dim: usize, r: u64 },
    TmsChain { da: usize, db: usize, len: usize, r: u64 },
    BsSector { total: usize, mix: u64 },
}

type Cache = RwLock<HashMap<BlockKey, Arc<DMatrix<f64>>>>;

/// Entries (f64 elements) kept before the cache is flushed.
const CACHE_CAPACITY: usize = 24 << 20;

fn cache() -> &'static (Cache, std::sync::atomic::AtomicUsize) {
    static CACHE: OnceLock<(Cache, std::sync::atomic::AtomicUsize)> = OnceLock::new();
    CACHE.get_or_init(|| (RwLock::new(HashMap::new()), std::sync::atomic::AtomicUsize::new(0)))
}

fn cached_block(key: BlockKey, build: impl FnOnce() -> DMatrix<f64>) -> Arc<DMatrix<f64>> {
    use std::sync::atomic::Ordering;
    let (map, size) = cache();
    if let Some(m) = map.read().unwrap().get(&key) {
        return Arc::clone(m);
    }
    let m = Arc::new(build());
    let mut guard = map.write().unwrap();
    if size.load(Ordering::Relaxed) + m.len() > CACHE_CAPACITY {
        guard.clear();
        size.store(0, Ordering::Relaxed);
    }
    let entry = guard.entry(key).or_insert_with(|| {
        size.fetch_add(m.len(), Ordering::Relaxed);
        Arc::clone(&m)
    });
    Arc::clone(entry)
}

/// Extra Fock levels used when exponentiating an unbounded generator.
fn padding(n: usize) -> usize {
    8 + n / 4
}

fn displacement_block(dim: usize, amp: f64) -> Arc<DMatrix<f64>> {
    cached_block(BlockKey::Displace { dim, amp: amp.to_bits() }, || {
        let a = ladder_matrix(dim - 1).expect("dim >= 2");
        let gen = (a.transpose() - &a) * amp;
        expm(&gen)
    })
}

fn squeeze_block(dim: usize, r: f64) -> Arc<DMatrix<f64>> {
    cached_block(BlockKey::Squeeze { dim, r: r.to_bits() }, || {
        let a = ladder_matrix(dim - 1).expect("dim >= 2");
        let a2 = &a * &a;
        let gen = (&a2 - a2.transpose()) * (r / 2.0);
        expm(&gen)
    })
}

fn tms_block(da: usize, db: usize, len: usize, r: f64) -> Arc<DMatrix<f64>> {
    cached_block(BlockKey::TmsChain { da, db, len, r: r.to_bits() }, || {
        let mut gen = DMatrix::zeros(len, len);
        for k in 0..len - 1 {
            let c = r * (((k + da + 1) * (k + db + 1)) as f64).sqrt();
            gen[(k + 1, k)] = c;
            gen[(k, k + 1)] = -c;
        }
        expm(&gen)
    })
}

fn bs_block(total: usize, mix: f64) -> Arc<DMatrix<f64>> {
    cached_block(BlockKey::BsSector { total, mix: mix.to_bits() }, || {
        let d = total + 1;
        let mut gen = DMatrix::zeros(d, d);
        for i in 1..d {
            let c = mix * ((i * (total - i + 1)) as f64).sqrt();
            gen[(i - 1, i)] = c;
            gen[(i, i - 1)] = -c;
        }
        expm(&gen)
    })
}

/// Scatter target for one block: amplitudes written in-range and leaked weight.
struct BlockOutput {
    writes: Vec<(usize, Complex64)>,
    leak: f64,
}

/// Applies a real block unitary to the complex vectors gathered in `cols`.
///
/// `inputs[c][k]` is the state index for block row `k` of column `c`
/// (`None` if that basis element lies outside the cutoff); only rows
/// `in_lo..in_lo + in_len` carry input.
fn apply_block(
    u: &DMatrix<f64>,
    state: &TwoModeQubitState,
    index_of: &(dyn Fn(usize, usize) -> Option<usize> + Sync),
    n_cols: usize,
    in_lo: usize,
    in_len: usize,
) -> Option<BlockOutput> {
    let amps = state.amplitudes();
    let mut xr = DMatrix::zeros(in_len, n_cols);
    let mut xi = DMatrix::zeros(in_len, n_cols);
    let mut any = false;
    for c in 0..n_cols {
        for k in 0..in_len {
            if let Some(idx) = index_of(c, in_lo + k) {
                let z = amps[idx];
                if z.re != 0.0 || z.im != 0.0 {
                    any = true;
                }
                xr[(k, c)] = z.re;
                xi[(k, c)] = z.im;
            }
        }
    }
    if !any {
        return None;
    }
    let uc = u.columns(in_lo, in_len);
    let yr = uc * &xr;
    let yi = uc * &xi;
    let mut writes = Vec::with_capacity(u.nrows() * n_cols);
    let mut leak = 0.0;
    for c in 0..n_cols {
        for k in 0..u.nrows() {
            let z = Complex64::new(yr[(k, c)], yi[(k, c)]);
            match index_of(c, k) {
                Some(idx) => writes.push((idx, z)),
                None => leak += z.norm_sqr(),
            }
        }
    }
    Some(BlockOutput { writes, leak })
}

fn assemble(
    state: &TwoModeQubitState,
    blocks: Vec<Option<BlockOutput>>,
    op: &'static str,
) -> Result<TwoModeQubitState> {
    let t = *state.truncation();
    let mut amps = vec![Complex64::new(0.0, 0.0); t.len()];
    let mut leak = 0.0;
    for b in blocks.into_iter().flatten() {
        for (idx, z) in b.writes {
            amps[idx] = z;
        }
        leak += b.leak;
    }
    TwoModeQubitState::from_parts_unchecked(t, amps, state.norm_leak()).charge_leak(leak, op)
}

fn apply_single_mode(
    state: &TwoModeQubitState,
    mode: Mode,
    u: &DMatrix<f64>,
    op: &'static str,
) -> Result<TwoModeQubitState> {
    let t = *state.truncation();
    let dim = t.dim(mode);
    let other = t.dim(mode.other());
    let index_of = |c: usize, n: usize| -> Option<usize> {
        if n >= dim {
            return None;
        }
        let (q, o) = (c / other, c % other);
        Some(match mode {
            Mode::A => t.index(q, n, o),
            Mode::B => t.index(q, o, n),
        })
    };
    let block = apply_block(u, state, &index_of, 2 * other, 0, dim);
    assemble(state, vec![block], op)
}

/// Displacement `exp(α m† − α* m)` of one mode.
pub fn displacement(state: &TwoModeQubitState, alpha: Complex64, mode: Mode) -> Result<TwoModeQubitState> {
    ensure(alpha.re.is_finite() && alpha.im.is_finite(), || "alpha must be finite".into())?;
    let amp = alpha.norm();
    if amp == 0.0 {
        return Ok(state.clone());
    }
    let theta = alpha.arg();
    let n = state.truncation().n_max(mode);
    let u = displacement_block(n + 1 + padding(n), amp);
    let rotated = state.rotate_mode(mode, -theta);
    let out = apply_single_mode(&rotated, mode, &u, "displacement")?;
    Ok(out.rotate_mode(mode, theta))
}

/// Single-mode squeeze `exp[(r/2)(e^{−iθ} m² − e^{iθ} m†²)]`.
pub fn single_mode_squeeze(
    state: &TwoModeQubitState,
    r: f64,
    theta: f64,
    mode: Mode,
) -> Result<TwoModeQubitState> {
    ensure(r >= 0.0 && r.is_finite(), || format!("squeeze magnitude must be >= 0, got {r}"))?;
    if r == 0.0 {
        return Ok(state.clone());
    }
    let n = state.truncation().n_max(mode);
    let u = squeeze_block(n + 1 + padding(n), r);
    let rotated = state.rotate_mode(mode, -theta / 2.0);
    let out = apply_single_mode(&rotated, mode, &u, "single_mode_squeeze")?;
    Ok(out.rotate_mode(mode, theta / 2.0))
}

/// Two-mode squeeze `exp[r(e^{iθ} a†b† − e^{−iθ} ab)]`.
pub fn two_mode_squeeze(state: &TwoModeQubitState, r: f64, theta: f64) -> Result<TwoModeQubitState> {
    ensure(r >= 0.0 && r.is_finite(), || format!("squeeze magnitude must be >= 0, got {r}"))?;
    if r == 0.0 {
        return Ok(state.clone());
    }
    let t = *state.truncation();
    let (na_max, nb_max) = (t.n_max_a as isize, t.n_max_b as isize);
    let rotated = state.rotate_mode(Mode::A, -theta);

    let diffs: Vec<isize> = (-nb_max..=na_max).collect();
    let blocks: Vec<Option<BlockOutput>> = diffs
        .par_iter()
        .map(|&d| {
            let da = d.max(0) as usize;
            let db = (-d).max(0) as usize;
            let len = (t.n_max_a - da).min(t.n_max_b - db) + 1;
            let padded = len + padding(len);
            let index_of = |q: usize, k: usize| -> Option<usize> {
                let (na, nb) = (k + da, k + db);
                (na <= t.n_max_a && nb <= t.n_max_b).then(|| t.index(q, na, nb))
            };
            // cheap zero check before touching the cache
            let amps = rotated.amplitudes();
            let nonzero = (0..2).any(|q| {
                (0..len).any(|k| amps[index_of(q, k).unwrap()] != Complex64::new(0.0, 0.0))
            });
            if !nonzero {
                return None;
            }
            let u = tms_block(da, db, padded, r);
            apply_block(&u, &rotated, &index_of, 2, 0, len)
        })
        .collect();
    let out = assemble(&rotated, blocks, "two_mode_squeeze")?;
    Ok(out.rotate_mode(Mode::A, theta))
}

/// Beamsplitter `exp[χ(e^{−iφ} ab† − e^{iφ} a†b)]`.
pub fn beamsplitter(state: &TwoModeQubitState, mix: f64, phi_bs: f64) -> Result<TwoModeQubitState> {
    ensure(mix.is_finite() && phi_bs.is_finite(), || "beamsplitter angles must be finite".into())?;
    if mix == 0.0 {
        return Ok(state.clone());
    }
    let t = *state.truncation();
    let rotated = state.rotate_mode(Mode::A, -phi_bs);
    let totals: Vec<usize> = (0..=t.n_max_a + t.n_max_b).collect();
    let blocks: Vec<Option<BlockOutput>> = totals
        .par_iter()
        .map(|&total| {
            let lo = total.saturating_sub(t.n_max_b);
            let hi = total.min(t.n_max_a);
            let index_of = |q: usize, na: usize| -> Option<usize> {
                (na >= lo && na <= hi).then(|| t.index(q, na, total - na))
            };
            let amps = rotated.amplitudes();
            let nonzero = (0..2).any(|q| {
                (lo..=hi).any(|na| amps[t.index(q, na, total - na)] != Complex64::new(0.0, 0.0))
            });
            if !nonzero {
                return None;
            }
            let u = bs_block(total, mix);
            apply_block(&u, &rotated, &index_of, 2, lo, hi - lo + 1)
        })
        .collect();
    let out = assemble(&rotated, blocks, "beamsplitter")?;
    Ok(out.rotate_mode(Mode::A, phi_bs))
}
