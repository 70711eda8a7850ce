//! Fisher information, Cramér–Rao bounds and sensitivity extraction.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fock::{number_stats, NumberOp, TwoModeQubitState};
use crate::interferometer::{check_grid, linspace, AnalyticFringe, CircuitKind, CircuitProgram, FringeModel};
use crate::sideband::Kernel;

/// Phase uncertainty bound `1/√𝓕` of each interferometer for a probe with
/// mean phonon number `mean_n`:
///
/// * `su2`: `1/√⟨N⟩`
/// * `su11_single`: `1/√(8⟨N⟩(⟨N⟩+1))`
/// * `su11_two`: `1/√(⟨N⟩(⟨N⟩+2))`
pub fn cr_bound(kind: CircuitKind, mean_n: f64) -> Result<f64> {
    ensure(mean_n > 0.0 && mean_n.is_finite(), || format!("mean_n must be positive, got {mean_n}"))?;
    Ok(1.0 / quantum_fisher(kind, mean_n).sqrt())
}

/// `𝓕` matching [`cr_bound`].
pub fn quantum_fisher(kind: CircuitKind, mean_n: f64) -> f64 {
    match kind {
        CircuitKind::Su2 => mean_n,
        CircuitKind::Su11Single => 8.0 * mean_n * (mean_n + 1.0),
        CircuitKind::Su11Two => mean_n * (mean_n + 2.0),
    }
}

/// `1/√⟨N⟩`
pub fn sql(mean_n: f64) -> Result<f64> {
    ensure(mean_n > 0.0, || format!("mean_n must be positive, got {mean_n}"))?;
    Ok(1.0 / mean_n.sqrt())
}

/// `20·log10(Δφ·√⟨N⟩)`; negative below the standard quantum limit.
pub fn db_vs_sql(delta_phi: f64, mean_n: f64) -> Result<f64> {
    ensure(delta_phi > 0.0 && mean_n > 0.0, || {
        format!("delta_phi and mean_n must be positive (got {delta_phi}, {mean_n})")
    })?;
    Ok(20.0 * (delta_phi * mean_n.sqrt()).log10())
}

/// Pure-state quantum Fisher information `4 Var(G)` for `G` a number operator.
pub fn qfi_from_state(state: &TwoModeQubitState, generator: NumberOp) -> Result<f64> {
    Ok(4.0 * number_stats(state, generator)?.variance)
}

/// Binary-outcome Fisher information `(dP/dφ)² / (P(1−P))`.
pub fn classical_fisher(p_down: f64, dp_dphi: f64) -> Result<f64> {
    if !(p_down > 0.0 && p_down < 1.0) {
        return Err(Error::Undefined(format!("Fisher information at P = {p_down}")));
    }
    Ok(dp_dphi * dp_dphi / (p_down * (1.0 - p_down)))
}

/// `Σ_k (dP_k/dφ)² / P_k` over any outcome distribution.
pub fn classical_fisher_general(probs: &[f64], slopes: &[f64]) -> Result<f64> {
    ensure(probs.len() == slopes.len(), || "probability and slope lengths differ".into())?;
    let mut f = 0.0;
    for (&p, &d) in probs.iter().zip(slopes) {
        if p > 0.0 {
            f += d * d / p;
        } else if d != 0.0 {
            return Err(Error::Undefined("outcome with zero probability and nonzero slope".into()));
        }
    }
    Ok(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherPoint {
    pub phi: f64,
    pub p_down: f64,
    pub slope: f64,
    pub fisher: f64,
}

/// `F(φ)` over a grid.
pub fn fringe_fisher_profile<M: FringeModel>(model: &M, phi_grid: &[f64]) -> Result<Vec<FisherPoint>> {
    check_grid(phi_grid)?;
    phi_grid
        .iter()
        .map(|&phi| {
            let (p, slope) = model.value_and_slope(phi)?;
            Ok(FisherPoint {
                phi,
                p_down: p,
                slope,
                fisher: classical_fisher(p, slope)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub kind: CircuitKind,
    pub mean_n: f64,
    pub fisher_max: f64,
    pub delta_phi: f64,
    pub phi_at_best: f64,
    pub cr_bound: f64,
    pub sql: f64,
    pub db_vs_sql: f64,
    pub beta_used: f64,
}

/// Golden-section maximization of `f` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `F(φ)`, or `None` where it is undefined (P at 0 or 1).
fn fisher_at<M: FringeModel>(model: &M, phi: f64) -> Result<Option<f64>> {
    let (p, slope) = model.value_and_slope(phi)?;
    match classical_fisher(p, slope) {
        Ok(f) => Ok(Some(f)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

const PHI_TOL: f64 = 1e-6;

/// Maximum of `F` over `phi_grid`, refined by golden section around the best
/// grid point. Points where `F` is undefined are skipped.
fn best_phase<M: FringeModel>(model: &M, phi_grid: &[f64]) -> Result<Option<(f64, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &phi) in phi_grid.iter().enumerate() {
        if let Some(f) = fisher_at(model, phi)? {
            if f.is_finite() && best.is_none_or(|(_, b)| f > b) {
                best = Some((i, f));
            }
        }
    }
    let Some((i, f_grid)) = best else { return Ok(None) };
    if phi_grid.len() < 3 {
        return Ok(Some((phi_grid[i], f_grid)));
    }
    let lo = phi_grid[i.saturating_sub(1)];
    let hi = phi_grid[(i + 1).min(phi_grid.len() - 1)];
    let eval = |phi: f64| fisher_at(model, phi).ok().flatten().filter(|f| f.is_finite()).unwrap_or(f64::NEG_INFINITY);
    let (phi, f) = golden_max(eval, lo, hi, PHI_TOL);
    Ok(Some(if f > f_grid { (phi, f) } else { (phi_grid[i], f_grid) }))
}

/// Readout pulse areas scanned when optimizing `β`.
pub const BETA_RANGE: (f64, f64) = (0.02, PI);

/// Best phase sensitivity `Δφ = 1/√max F` of a fringe, optionally optimizing
/// the readout pulse area first.
pub fn max_sensitivity<M: FringeModel + Send>(model: &M, phi_grid: &[f64], optimize_beta: bool) -> Result<SensitivityReport> {
    check_grid(phi_grid)?;
    let mean_n = model.mean_n();
    if !(mean_n > 0.0) {
        return Err(Error::Degenerate("probe has zero mean phonon number".into()));
    }
    let (beta, phi, f) = if optimize_beta {
        let betas = linspace(BETA_RANGE.0, BETA_RANGE.1, 48);
        let scores: Vec<Result<Option<(f64, f64)>>> =
            betas.par_iter().map(|&b| best_phase(&model.with_beta(b), phi_grid)).collect();
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, s) in scores.into_iter().enumerate() {
            if let Some((phi, f)) = s? {
                if best.is_none_or(|(_, _, b)| f > b) {
                    best = Some((i, phi, f));
                }
            }
        }
        let Some((i, phi_g, f_g)) = best else {
            return Err(Error::Degenerate("Fisher information undefined over the whole grid".into()));
        };
        let lo = betas[i.saturating_sub(1)];
        let hi = betas[(i + 1).min(betas.len() - 1)];
        let score = |b: f64| {
            best_phase(&model.with_beta(b), phi_grid)
                .ok()
                .flatten()
                .map_or(f64::NEG_INFINITY, |(_, f)| f)
        };
        let (b, f) = golden_max(score, lo, hi, 1e-5);
        if f > f_g {
            let (phi, f) = best_phase(&model.with_beta(b), phi_grid)?.expect("scored above");
            (b, phi, f)
        } else {
            (betas[i], phi_g, f_g)
        }
    } else {
        let Some((phi, f)) = best_phase(model, phi_grid)? else {
            return Err(Error::Degenerate("Fisher information undefined over the whole grid".into()));
        };
        (model.beta(), phi, f)
    };
    if !(f > 0.0) {
        return Err(Error::Degenerate("fringe carries no phase information".into()));
    }
    let kind = model.kind();
    let delta_phi = 1.0 / f.sqrt();
    Ok(SensitivityReport {
        kind,
        mean_n,
        fisher_max: f,
        delta_phi,
        phi_at_best: phi,
        cr_bound: cr_bound(kind, mean_n)?,
        sql: sql(mean_n)?,
        db_vs_sql: db_vs_sql(delta_phi, mean_n)?,
        beta_used: beta,
    })
}

/// Default phase grid for sensitivity searches: 720 intervals over one period.
pub fn default_phi_grid() -> Vec<f64> {
    linspace(0.0, 2.0 * PI, 721)
}

/// Ideal-theory sensitivity for each probe mean in `mean_ns`.
pub fn sensitivity_sweep(kind: CircuitKind, mean_ns: &[f64], optimize_beta: bool, kernel: Kernel) -> Result<Vec<SensitivityReport>> {
    let grid = default_phi_grid();
    mean_ns
        .iter()
        .map(|&n| {
            let prog = CircuitProgram::new(kind, kind.param_for_mean_n(n)?)?;
            max_sensitivity(&AnalyticFringe::new(prog, kernel)?, &grid, optimize_beta)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{Mode, Qubit, Truncation};
    use crate::gates::{displacement, single_mode_squeeze, two_mode_squeeze};
    use num_complex::Complex64;

    #[test]
    fn bound_values() {
        assert!((cr_bound(CircuitKind::Su2, 36.0).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert!((cr_bound(CircuitKind::Su11Single, 1.0).unwrap() - 0.25).abs() < 1e-12);
        let v = cr_bound(CircuitKind::Su11Two, 3.04).unwrap();
        assert!((v - 1.0 / (3.04f64 * 5.04).sqrt()).abs() < 1e-12);
        assert!((v - 0.2554).abs() < 1e-4);
        assert!(cr_bound(CircuitKind::Su2, 0.0).is_err());
    }

    #[test]
    fn db_values() {
        assert!(db_vs_sql(1.0 / 3.0, 9.0).unwrap().abs() < 1e-12);
        assert!((db_vs_sql(0.5 / 3.0, 9.0).unwrap() + 6.0206).abs() < 1e-4);
        assert!(db_vs_sql(0.0, 1.0).is_err());
        assert!(db_vs_sql(1.0, -1.0).is_err());
    }

    #[test]
    fn classical_fisher_domain() {
        assert_eq!(classical_fisher(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(classical_fisher(0.3, 0.0).unwrap(), 0.0);
        assert!(matches!(classical_fisher(0.0, 0.1), Err(Error::Undefined(_))));
        assert!(matches!(classical_fisher(1.0, 0.1), Err(Error::Undefined(_))));
    }

    #[test]
    fn qfi_of_probes() {
        let t = Truncation::with_cutoffs(80, 80).unwrap();
        let vac = TwoModeQubitState::vacuum(t, Qubit::Up).unwrap();
        assert_eq!(qfi_from_state(&vac, NumberOp::ModeA).unwrap(), 0.0);
        let coh = displacement(&vac, Complex64::new(1.7, 0.0), Mode::A).unwrap();
        assert!((qfi_from_state(&coh, NumberOp::ModeA).unwrap() - 4.0 * 1.7 * 1.7).abs() < 1e-9);
        let sq = single_mode_squeeze(&vac, 0.9, 0.0, Mode::A).unwrap();
        let n = 0.9f64.sinh().powi(2);
        let q = qfi_from_state(&sq, NumberOp::ModeA).unwrap();
        assert!((q / (8.0 * n * (n + 1.0)) - 1.0).abs() < 1e-6);
        let tms = two_mode_squeeze(&vac, 0.7, 0.0).unwrap();
        let total = 2.0 * 0.7f64.sinh().powi(2);
        // Var(N_total) = sinh²(2r) = ⟨N⟩(⟨N⟩+2)
        let v = qfi_from_state(&tms, NumberOp::Total).unwrap() / 4.0;
        assert!((v - total * (total + 2.0)).abs() < 1e-9);
    }

    #[test]
    fn flat_fringe_has_no_information() {
        let prog = CircuitProgram::new(CircuitKind::Su11Two, 0.0).unwrap().with_offsets(0.0, 0.2);
        let m = AnalyticFringe::new(prog, Kernel::Corrected).unwrap();
        let prof = fringe_fisher_profile(&m, &linspace(0.1, 3.0, 7)).unwrap();
        assert!(prof.iter().all(|p| p.fisher == 0.0));
        assert!(max_sensitivity(&m, &default_phi_grid(), false).is_err());
    }

    #[test]
    fn squeezed_probe_beats_sql() {
        let kind = CircuitKind::Su11Single;
        let prog = CircuitProgram::new(kind, kind.param_for_mean_n(3.0).unwrap()).unwrap();
        let m = AnalyticFringe::new(prog, Kernel::Corrected).unwrap();
        let rep = max_sensitivity(&m, &default_phi_grid(), true).unwrap();
        assert!(rep.delta_phi < rep.sql);
        assert!(rep.delta_phi >= rep.cr_bound - 1e-9);
        assert!((rep.sql - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(rep.db_vs_sql < 0.0);
    }

    #[test]
    fn golden_finds_peak() {
        let (x, f) = golden_max(|x| -(x - 0.3).powi(2), -1.0, 2.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-8 && f.abs() < 1e-15);
    }
}
