use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{covariance, ensure_full_rank, levenberg_marquardt, LmOptions};
use super::{binomial_sigma, diag_sqrt, matrix_rows, FitResult};
use crate::error::{Error, Result};
use crate::interferometer::{AnalyticFringe, CircuitKind, CircuitProgram, FringeDataset};
use crate::sideband::Kernel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FringeFitOptions {
    pub kernel: Kernel,
    pub max_iter: usize,
    /// Upper bound on the state parameter; a per-kind default when absent.
    pub param_max: Option<f64>,
}

impl Default for FringeFitOptions {
    fn default() -> Self {
        FringeFitOptions {
            kernel: Kernel::default(),
            max_iter: 200,
            param_max: None,
        }
    }
}

fn default_param_max(kind: CircuitKind) -> f64 {
    match kind {
        CircuitKind::Su2 => 6.0,
        CircuitKind::Su11Single | CircuitKind::Su11Two => 2.5,
    }
}

fn param_name(kind: CircuitKind) -> &'static str {
    match kind {
        CircuitKind::Su2 => "alpha0",
        _ => "r0",
    }
}

pub fn fit_fringe(dataset: &FringeDataset, kind: CircuitKind) -> Result<FitResult> {
    fit_fringe_with(dataset, kind, &FringeFitOptions::default())
}

struct Problem<'a> {
    kind: CircuitKind,
    base: &'a CircuitProgram,
    kernel: Kernel,
    phis: Vec<f64>,
    ys: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Problem<'_> {
    fn model(&self, param: f64, phi0: f64, v0: f64) -> Result<AnalyticFringe> {
        let mut prog = self.base.clone();
        prog.kind = self.kind;
        prog.param = param;
        prog.phi0 = phi0;
        prog.v0 = v0;
        prog.truncation = None;
        AnalyticFringe::new(prog, self.kernel)
    }

    fn residuals(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let m = self.model(x[0], x[1], x[2])?;
        let n = self.phis.len();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 3);
        for i in 0..n {
            let e = m.eval(self.phis[i])?;
            let w = 1.0 / self.sigmas[i];
            r[i] = (e.p - self.ys[i]) * w;
            j[(i, 0)] = e.d_param * w;
            j[(i, 1)] = e.d_phi0 * w;
            j[(i, 2)] = e.d_v0 * w;
        }
        Ok((r, j))
    }

    /// Coarse search over the state parameter and `φ₀`, with `v₀` solved
    /// in closed form at each node.
    fn seed(&self, param_max: f64) -> Result<[f64; 3]> {
        let n_param = 32;
        let n_phi = 24;
        let mut best = (f64::INFINITY, [param_max / 2.0, 0.0, 0.0]);
        for ip in 1..=n_param {
            let param = param_max * ip as f64 / n_param as f64;
            let m = self.model(param, 0.0, 0.0)?;
            for iphi in 0..n_phi {
                let phi0 = -PI + 2.0 * PI * iphi as f64 / n_phi as f64;
                let f: Vec<f64> = self
                    .phis
                    .iter()
                    .map(|&phi| m.eval(phi - phi0).map(|e| e.p))
                    .collect::<Result<_>>()?;
                // P = f + v₀(1 − f) is linear in v₀
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..f.len() {
                    let w = 1.0 / (self.sigmas[i] * self.sigmas[i]);
                    num += w * (1.0 - f[i]) * (self.ys[i] - f[i]);
                    den += w * (1.0 - f[i]) * (1.0 - f[i]);
                }
                let v0 = if den > 0.0 { (num / den).clamp(0.0, 0.95) } else { 0.0 };
                let cost: f64 = (0..f.len())
                    .map(|i| ((f[i] + v0 * (1.0 - f[i]) - self.ys[i]) / self.sigmas[i]).powi(2))
                    .sum();
                if cost < best.0 {
                    best = (cost, [param, phi0, v0]);
                }
            }
        }
        Ok(best.1)
    }
}

/// Weighted least-squares fit of the analytic fringe for `kind` to `dataset`.
/// Free parameters are the state parameter, `φ₀` and `v₀`. The readout
/// settings come from the dataset's program.
pub fn fit_fringe_with(dataset: &FringeDataset, kind: CircuitKind, opts: &FringeFitOptions) -> Result<FitResult> {
    dataset.validate()?;
    let phis = dataset.phis();
    let ys = dataset.p_downs();
    if phis.len() < 8 {
        return Err(Error::InsufficientData(format!("fringe fit needs >= 8 points, got {}", phis.len())));
    }
    let span = phis[phis.len() - 1] - phis[0];
    if span < PI {
        return Err(Error::InsufficientData(format!(
            "phase span {span:.4} rad is less than half a period"
        )));
    }
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if hi - lo <= 1e-12 {
        return Err(Error::RankDeficient("flat fringe: state parameter and offsets are not identifiable".into()));
    }
    let sigmas: Vec<f64> = dataset
        .points
        .iter()
        .map(|p| p.shots.map_or(1.0, |n| binomial_sigma(p.p_down, n)))
        .collect();
    let weighted = dataset.points.iter().all(|p| p.shots.is_some());
    let mut problem = Problem {
        kind,
        base: &dataset.program,
        kernel: opts.kernel,
        phis,
        ys,
        sigmas,
    };
    let param_max = opts.param_max.unwrap_or_else(|| default_param_max(kind));
    let x0 = problem.seed(param_max)?;

    let lm_opts = LmOptions {
        max_iter: opts.max_iter,
        lower: vec![0.0, -2.0 * PI, 0.0],
        upper: vec![param_max * 1.5, 2.0 * PI, 0.999],
        ..LmOptions::unbounded(3)
    };
    let solve = |problem: &Problem, x0: DVector<f64>| -> Result<_> {
        let out = levenberg_marquardt(|x| problem.residuals(x), x0, &lm_opts)?;
        if !out.converged {
            return Err(Error::NonConvergence {
                iterations: out.iterations,
                detail: format!("fringe fit gradient {:.3e}", out.gradient_norm),
            });
        }
        Ok(out)
    };
    let mut out = solve(&problem, DVector::from_row_slice(&x0))?;
    // Weights from the observed counts correlate with the noise and bias the
    // fit; reweight from the model until the parameters settle.
    let shots: Vec<Option<u64>> = dataset.points.iter().map(|p| p.shots).collect();
    if shots.iter().any(Option::is_some) {
        for _ in 0..REWEIGHT_ROUNDS {
            let m = problem.model(out.x[0], out.x[1], out.x[2])?;
            for (i, n) in shots.iter().enumerate() {
                if let Some(n) = *n {
                    problem.sigmas[i] = model_sigma(m.eval(problem.phis[i])?.p, n);
                }
            }
            let prev = out.x.clone();
            out = solve(&problem, prev.clone())?;
            if (&out.x - &prev).amax() <= 1e-10 * (1.0 + prev.amax()) {
                break;
            }
        }
    }
    let names = [param_name(kind), "phi0", "v0"];
    ensure_full_rank(&out.jacobian, &names)?;

    let m = problem.phis.len();
    let dof = (m - 3).max(1) as f64;
    // with unknown noise the residual scatter sets the scale
    let scale = if weighted { 1.0 } else { 2.0 * out.cost / dof };
    let cov = covariance(&out.jacobian, scale);

    let mut params = out.x.as_slice().to_vec();
    params[1] = wrap_phase(params[1]);
    let unweighted_rms = (out
        .residuals
        .iter()
        .zip(&problem.sigmas)
        .map(|(r, s)| (r * s).powi(2))
        .sum::<f64>()
        / m as f64)
        .sqrt();
    let mut derived = BTreeMap::new();
    derived.insert("amplitude".into(), kind.amplitude(params[0]));
    derived.insert("mean_n".into(), kind.probe_mean_n(params[0]));
    derived.insert("chi2_reduced".into(), 2.0 * out.cost / dof);
    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        params,
        std_errors: cov.as_ref().map(diag_sqrt),
        covariance: cov.as_ref().map(matrix_rows),
        residual_rms: unweighted_rms,
        gradient_norm: out.gradient_norm,
        converged: out.converged,
        iterations: out.iterations,
        strategy: "levenberg_marquardt".into(),
        derived,
    })
}

const REWEIGHT_ROUNDS: usize = 8;

/// Binomial standard deviation at the model probability, kept off 0 and 1 by
/// half a count.
fn model_sigma(p: f64, shots: u64) -> f64 {
    let n = shots as f64;
    let floor = 0.5 / (n + 1.0);
    let p = p.clamp(floor, 1.0 - floor);
    (p * (1.0 - p) / n).sqrt()
}

fn wrap_phase(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{linspace, sweep_fringe};

    fn noiseless(kind: CircuitKind, param: f64, phi0: f64, v0: f64) -> FringeDataset {
        let prog = CircuitProgram::new(kind, param).unwrap().with_offsets(phi0, v0);
        let grid = linspace(0.0, 2.0 * PI, 41);
        sweep_fringe(&prog, &grid, None, 0).unwrap()
    }

    #[test]
    fn recovers_noiseless_su2() {
        let d = noiseless(CircuitKind::Su2, 3.0, 0.0, 0.0);
        let fit = fit_fringe(&d, CircuitKind::Su2).unwrap();
        assert!(fit.converged);
        assert!((fit.get("alpha0").unwrap() - 3.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.get("phi0").unwrap().abs() < 1e-6);
        assert!(fit.get("v0").unwrap().abs() < 1e-6);
    }

    #[test]
    fn recovers_offsets_for_each_kind() {
        for (kind, param) in [(CircuitKind::Su2, 1.7), (CircuitKind::Su11Single, 1.1), (CircuitKind::Su11Two, 0.9)] {
            let d = noiseless(kind, param, 0.3, 0.05);
            let fit = fit_fringe(&d, kind).unwrap();
            assert!((fit.params[0] - param).abs() < 1e-6, "{kind:?} {fit:?}");
            assert!((fit.params[1] - 0.3).abs() < 1e-6, "{kind:?} {fit:?}");
            assert!((fit.params[2] - 0.05).abs() < 1e-6, "{kind:?} {fit:?}");
        }
    }

    #[test]
    fn flat_data_is_rank_deficient() {
        let mut d = noiseless(CircuitKind::Su2, 1.0, 0.0, 0.0);
        for p in &mut d.points {
            p.p_down = 0.3;
        }
        assert!(matches!(fit_fringe(&d, CircuitKind::Su2), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn rejects_short_or_narrow_data() {
        let prog = CircuitProgram::new(CircuitKind::Su2, 1.0).unwrap();
        let few = sweep_fringe(&prog, &linspace(0.0, 6.0, 7), None, 0).unwrap();
        assert!(matches!(fit_fringe(&few, CircuitKind::Su2), Err(Error::InsufficientData(_))));
        let narrow = sweep_fringe(&prog, &linspace(0.0, 2.0, 20), None, 0).unwrap();
        assert!(matches!(fit_fringe(&narrow, CircuitKind::Su2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn shot_noise_fit_is_close() {
        let r0 = 3.04f64.sqrt().asinh();
        let prog = CircuitProgram::new(CircuitKind::Su11Two, r0).unwrap();
        let d = sweep_fringe(&prog, &linspace(0.0, 2.0 * PI, 41), Some(250), 7).unwrap();
        let fit = fit_fringe(&d, CircuitKind::Su11Two).unwrap();
        let nbar = fit.derived["amplitude"];
        assert!((nbar / 3.04 - 1.0).abs() < 0.05, "{nbar}");
        assert!(fit.std_errors.is_some());
    }
}
