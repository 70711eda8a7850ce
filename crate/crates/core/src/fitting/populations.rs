use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nnls::simplex_lsq;
use super::{binomial_sigma, diag_sqrt, matrix_rows, FitResult};
use crate::error::{ensure, Error, Result};
use crate::fock::{thermal_weights, Mode, Qubit, Truncation, TwoModeQubitState};
use crate::sideband::{offres_trajectory, SidebandConfig, SidebandKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiPoint {
    pub t: f64,
    pub p_down: f64,
    pub shots: Option<u64>,
}

/// Blue-sideband `P↓(t)` record starting from `|↑⟩`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RabiDataset {
    pub points: Vec<RabiPoint>,
}

impl RabiDataset {
    pub fn from_exact(times: &[f64], p_down: &[f64]) -> Result<Self> {
        ensure(times.len() == p_down.len(), || "times and p_down lengths differ".into())?;
        let d = RabiDataset {
            points: times
                .iter()
                .zip(p_down)
                .map(|(&t, &p)| RabiPoint { t, p_down: p, shots: None })
                .collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.points.is_empty(), || "rabi dataset is empty".into())?;
        ensure(self.points[0].t >= 0.0, || "times must be >= 0".into())?;
        ensure(self.points.windows(2).all(|w| w[1].t > w[0].t), || {
            "times must be strictly increasing".into()
        })?;
        ensure(self.points.iter().all(|p| (0.0..=1.0).contains(&p.p_down)), || {
            "p_down values must lie in [0, 1]".into()
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn p_downs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_down).collect()
    }

    fn sigmas(&self) -> (Vec<f64>, bool) {
        let weighted = self.points.iter().all(|p| p.shots.is_some());
        let s = self
            .points
            .iter()
            .map(|p| match (weighted, p.shots) {
                (true, Some(n)) => binomial_sigma(p.p_down, n),
                _ => 1.0,
            })
            .collect();
        (s, weighted)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationStrategy {
    /// All populations at once on the simplex.
    #[default]
    Joint,
    /// One level at a time, the others rescaled to keep the trace.
    Coordinate,
}

impl PopulationStrategy {
    pub fn name(self) -> &'static str {
        match self {
            PopulationStrategy::Joint => "joint",
            PopulationStrategy::Coordinate => "coordinate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationFitOptions {
    pub strategy: PopulationStrategy,
    pub max_sweeps: usize,
    /// Starting distribution for the coordinate strategy; a thermal guess
    /// when absent.
    pub seed: Option<Vec<f64>>,
}

impl Default for PopulationFitOptions {
    fn default() -> Self {
        PopulationFitOptions {
            strategy: PopulationStrategy::Joint,
            max_sweeps: 5000,
            seed: None,
        }
    }
}

/// State of the non-resonant mode during an off-resonant readout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spectator {
    #[default]
    Vacuum,
    /// Fock-diagonal mixture, uncorrelated with the resonant mode.
    Distribution(Vec<f64>),
    /// Same Fock number as the resonant mode, as in a two-mode squeezed state.
    Correlated,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffresFitOptions {
    pub fit: PopulationFitOptions,
    pub spectator: Spectator,
}

fn check_resolution(times: &[f64], omega_sb: f64, n_max: usize) -> Result<()> {
    ensure(omega_sb > 0.0 && omega_sb.is_finite(), || "sideband Rabi rate must be positive".into())?;
    let limit = std::f64::consts::PI / (omega_sb * ((n_max + 1) as f64).sqrt());
    let dt = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if dt >= limit {
        return Err(Error::InvalidParameter(format!(
            "time step {dt:.3e} s does not resolve level {n_max}: needs < {limit:.3e} s"
        )));
    }
    let n_points = times.len();
    if n_points < n_max + 1 {
        return Err(Error::InsufficientData(format!(
            "{n_points} points for {} populations",
            n_max + 1
        )));
    }
    Ok(())
}

/// Thermal distribution over `0..=n_max` whose early-time rise matches the
/// data: `P↓ ≈ (Ω_SB t/2)²(n̄ + 1)` before the first turnover.
pub fn thermal_seed(data: &RabiDataset, omega_sb: f64, n_max: usize) -> Result<Vec<f64>> {
    let (mut num, mut den) = (0.0, 0.0);
    for p in data.points.iter().take_while(|p| p.p_down < 0.15) {
        let t2 = p.t * p.t;
        num += p.p_down * t2;
        den += t2 * t2;
    }
    let nbar = if den > 0.0 {
        (4.0 * num / den / (omega_sb * omega_sb) - 1.0).clamp(0.0, n_max as f64)
    } else {
        0.5
    };
    let mut w = thermal_weights(nbar, 1e-15)?;
    w.resize(n_max + 1, 0.0);
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// Simplex-constrained solution of `basis · P ≈ data`.
fn solve_populations(
    basis: &DMatrix<f64>,
    data: &RabiDataset,
    seed: Option<Vec<f64>>,
    opts: &PopulationFitOptions,
    label: &str,
) -> Result<FitResult> {
    let k = basis.ncols();
    let m = basis.nrows();
    let (sigmas, weighted) = data.sigmas();
    let w = DVector::from_iterator(m, sigmas.iter().map(|s| 1.0 / s));
    let a = DMatrix::from_fn(m, k, |i, j| basis[(i, j)] * w[i]);
    let y = DVector::from_iterator(m, data.points.iter().zip(w.iter()).map(|(p, wi)| p.p_down * wi));

    let (p, iterations, converged) = match opts.strategy {
        PopulationStrategy::Joint => (simplex_lsq(&a, &y)?, 1, true),
        PopulationStrategy::Coordinate => {
            let seed = seed.ok_or_else(|| Error::InvalidParameter("coordinate strategy needs a seed".into()))?;
            coordinate_descent(&a, &y, seed, opts.max_sweeps)?
        }
    };
    let mut p: Vec<f64> = p.iter().map(|&x| x.max(0.0)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    let pv = DVector::from_row_slice(&p);

    let r = &a * &pv - &y;
    let grad = a.transpose() * &r;
    // KKT residual on the simplex: spread of the gradient over the support
    let mean_g = grad.dot(&pv);
    let gradient_norm = (0..k)
        .map(|i| if p[i] > 1e-12 { (grad[i] - mean_g).abs() } else { (mean_g - grad[i]).max(0.0) })
        .fold(0.0, f64::max);
    let cost = r.norm_squared();
    let support: Vec<usize> = (0..k).filter(|&i| p[i] > 1e-9).collect();
    let dof = m.saturating_sub(support.len()).max(1) as f64;
    let scale = if weighted { 1.0 } else { cost / dof };
    let sub = a.select_columns(&support);
    let cov = (sub.transpose() * &sub).try_inverse().map(|c| {
        let mut full = DMatrix::zeros(k, k);
        for (ii, &i) in support.iter().enumerate() {
            for (jj, &j) in support.iter().enumerate() {
                full[(i, j)] = c[(ii, jj)] * scale;
            }
        }
        full
    });
    let rms = ((&(basis * &pv) - DVector::from_vec(data.p_downs())).norm_squared() / m as f64).sqrt();
    let mean: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
    let mut derived = BTreeMap::new();
    derived.insert("mean_n".into(), mean);
    Ok(FitResult {
        names: (0..k).map(|n| format!("P{n}")).collect(),
        params: p,
        std_errors: cov.as_ref().map(diag_sqrt),
        covariance: cov.as_ref().map(matrix_rows),
        residual_rms: rms,
        gradient_norm,
        converged,
        iterations,
        strategy: format!("{label}_{}", opts.strategy.name()),
        derived,
    })
}

/// Varies one population at a time with the rest rescaled to keep the trace,
/// each move solved exactly along its line.
fn coordinate_descent(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    seed: Vec<f64>,
    max_sweeps: usize,
) -> Result<(DVector<f64>, usize, bool)> {
    let k = a.ncols();
    ensure(seed.len() == k, || format!("seed has {} levels, expected {k}", seed.len()))?;
    let s: f64 = seed.iter().sum();
    ensure(s > 0.0 && seed.iter().all(|&x| x >= 0.0), || "seed must be a distribution".into())?;
    let mut p = DVector::from_iterator(k, seed.iter().map(|x| x / s));
    let mut ap = a * &p;
    let mut cost = (&ap - y).norm_squared();
    for sweep in 1..=max_sweeps {
        let mut moved = 0.0f64;
        for kk in 0..k {
            let pk = p[kk];
            if pk >= 1.0 {
                continue;
            }
            let col = a.column(kk);
            // A·q for q the other levels renormalized
            let aq = (&ap - col * pk) / (1.0 - pk);
            let d = col - &aq;
            let dd = d.norm_squared();
            if dd == 0.0 {
                continue;
            }
            let x = (d.dot(&(y - &aq)) / dd).clamp(0.0, 1.0);
            let scale = (1.0 - x) / (1.0 - pk);
            for i in 0..k {
                p[i] = if i == kk { x } else { p[i] * scale };
            }
            ap = aq * (1.0 - x) + col * x;
            moved = moved.max((x - pk).abs());
        }
        let new_cost = (&ap - y).norm_squared();
        let settled = cost - new_cost <= 1e-15 * cost.max(1e-300);
        cost = new_cost;
        if moved < 1e-12 || (settled && moved < 1e-8) {
            return Ok((p, sweep, true));
        }
    }
    Ok((p, max_sweeps, false))
}

fn blue_basis(times: &[f64], omega_sb: f64, n_max: usize) -> DMatrix<f64> {
    DMatrix::from_fn(times.len(), n_max + 1, |i, n| {
        let w = omega_sb * ((n + 1) as f64).sqrt();
        (w * times[i] / 2.0).sin().powi(2)
    })
}

pub fn fit_fock_populations(data: &RabiDataset, n_max: usize, omega_sb: f64) -> Result<FitResult> {
    fit_fock_populations_with(data, n_max, omega_sb, &PopulationFitOptions::default())
}

/// Fock populations `P(0..=n_max)` from a resonant blue-sideband Rabi
/// signal, constrained to a distribution.
pub fn fit_fock_populations_with(
    data: &RabiDataset,
    n_max: usize,
    omega_sb: f64,
    opts: &PopulationFitOptions,
) -> Result<FitResult> {
    data.validate()?;
    let times = data.times();
    check_resolution(&times, omega_sb, n_max)?;
    let basis = blue_basis(&times, omega_sb, n_max);
    let seed = match (&opts.seed, opts.strategy) {
        (Some(s), _) => Some(s.clone()),
        (None, PopulationStrategy::Coordinate) => Some(thermal_seed(data, omega_sb, n_max)?),
        (None, PopulationStrategy::Joint) => None,
    };
    solve_populations(&basis, data, seed, opts, "resonant")
}

/// Fock populations of the resonant mode when the sideband also couples
/// off-resonantly to the other mode. Each basis signal is the exact two-mode
/// evolution of `|↑, n⟩` with the spectator state.
pub fn fit_fock_populations_offres(
    data: &RabiDataset,
    cfg: &SidebandConfig,
    n_max: usize,
    opts: &OffresFitOptions,
) -> Result<FitResult> {
    data.validate()?;
    cfg.validate()?;
    let resonant = if cfg.delta_1.abs() <= cfg.delta_2.abs() { Mode::A } else { Mode::B };
    let omega_sb = cfg.omega_sb(resonant);
    let times = data.times();
    check_resolution(&times, omega_sb, n_max)?;

    let spectator: Vec<(usize, f64)> = match &opts.spectator {
        Spectator::Vacuum => vec![(0, 1.0)],
        Spectator::Distribution(q) => {
            let s: f64 = q.iter().sum();
            ensure(q.iter().all(|&x| x >= 0.0) && (s - 1.0).abs() < 1e-6, || {
                "spectator distribution must be non-negative with unit sum".into()
            })?;
            q.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(m, &x)| (m, x)).collect()
        }
        Spectator::Correlated => Vec::new(),
    };
    let jobs: Vec<(usize, usize, f64)> = (0..=n_max)
        .flat_map(|n| match opts.spectator {
            Spectator::Correlated => vec![(n, n, 1.0)],
            _ => spectator.iter().map(|&(m, w)| (n, m, w)).collect(),
        })
        .collect();
    let signals: Vec<Result<(usize, f64, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(n, m, w)| {
            let cut = n + m + 2;
            let tr = Truncation::with_cutoffs(cut, cut)?;
            let (na, nb) = match resonant {
                Mode::A => (n, m),
                Mode::B => (m, n),
            };
            let s = TwoModeQubitState::fock(tr, Qubit::Up, na, nb)?;
            Ok((n, w, offres_trajectory(&s, cfg, &times, SidebandKind::Blue)?))
        })
        .collect();
    let mut basis = DMatrix::zeros(times.len(), n_max + 1);
    for r in signals {
        let (n, w, sig) = r?;
        for (i, v) in sig.into_iter().enumerate() {
            basis[(i, n)] += w * v;
        }
    }
    let seed = match (&opts.fit.seed, opts.fit.strategy) {
        (Some(s), _) => Some(s.clone()),
        (None, PopulationStrategy::Coordinate) => Some(thermal_seed(data, omega_sb, n_max)?),
        (None, PopulationStrategy::Joint) => None,
    };
    solve_populations(&basis, data, seed, &opts.fit, "offres")
}
