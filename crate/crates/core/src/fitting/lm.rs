//! Box-constrained Levenberg–Marquardt.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Converged when the projected `‖Jᵀr‖∞` falls below this.
    pub gtol: f64,
    /// Converged when the relative step falls below this.
    pub xtol: f64,
    /// Converged when the relative cost decrease falls below this.
    pub ftol: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LmOptions {
    pub fn unbounded(n: usize) -> Self {
        LmOptions {
            max_iter: 500,
            gtol: 1e-12,
            xtol: 1e-12,
            ftol: 1e-15,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub x: DVector<f64>,
    /// `½‖r‖²` at `x`.
    pub cost: f64,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

fn project(x: &mut DVector<f64>, lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Gradient with components pushing into an active bound removed.
fn projected_gradient(g: &DVector<f64>, x: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    DVector::from_fn(g.len(), |i, _| {
        if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
            0.0
        } else {
            g[i]
        }
    })
}

/// Minimizes `½‖r(x)‖²`. `f` returns the residual vector and its Jacobian
/// `∂r/∂x`.
pub fn levenberg_marquardt<F>(mut f: F, x0: DVector<f64>, opts: &LmOptions) -> Result<LmOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let n = x0.len();
    let mut x = x0;
    project(&mut x, &opts.lower, &opts.upper);
    let (mut r, mut j) = f(&x)?;
    if r.len() < n {
        return Err(Error::InsufficientData(format!("{} residuals for {n} parameters", r.len())));
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        if projected_gradient(&g, &x, &opts.lower, &opts.upper).amax() <= opts.gtol || cost == 0.0 {
            converged = true;
            break;
        }
        let diag_max = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let lam = *lambda.get_or_insert(1e-3 * diag_max);
        // components held at a bound by the gradient stay fixed this step
        let pg = projected_gradient(&g, &x, &opts.lower, &opts.upper);
        let free: Vec<usize> = (0..n).filter(|&i| pg[i] != 0.0 || g[i] == 0.0).collect();
        let mut a = jtj.select_rows(&free).select_columns(&free);
        for (k, &i) in free.iter().enumerate() {
            a[(k, k)] += lam * jtj[(i, i)].max(1e-12 * diag_max);
        }
        let rhs = -g.select_rows(&free);
        let Some(sub_step) = a.cholesky().map(|c| c.solve(&rhs)) else {
            lambda = Some(lam * 10.0);
            continue;
        };
        let mut step = DVector::zeros(n);
        for (k, &i) in free.iter().enumerate() {
            step[i] = sub_step[k];
        }
        let mut x_new = &x + &step;
        project(&mut x_new, &opts.lower, &opts.upper);
        let actual = &x_new - &x;
        let (r_new, j_new) = f(&x_new)?;
        let cost_new = 0.5 * r_new.norm_squared();
        if cost_new.is_finite() && cost_new <= cost {
            let small_step = actual.norm() <= opts.xtol * (x.norm() + opts.xtol);
            let small_drop = cost - cost_new <= opts.ftol * cost;
            x = x_new;
            r = r_new;
            j = j_new;
            cost = cost_new;
            lambda = Some((lam / 3.0).max(1e-15 * diag_max));
            if small_step || small_drop {
                converged = true;
                break;
            }
        } else {
            lambda = Some(lam * 4.0);
            if lam > 1e16 * diag_max {
                // no descent direction left at machine precision
                converged = true;
                break;
            }
        }
    }
    let gradient_norm = projected_gradient(&(j.transpose() * &r), &x, &opts.lower, &opts.upper).amax();
    Ok(LmOutcome {
        x,
        cost,
        residuals: r,
        jacobian: j,
        iterations,
        converged,
        gradient_norm,
    })
}

/// Ratio of smallest to largest singular value of `j`.
pub fn condition_ratio(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Errors when `j` is numerically rank deficient.
pub fn ensure_full_rank(j: &DMatrix<f64>, names: &[&str]) -> Result<()> {
    let ratio = condition_ratio(j);
    if ratio < 1e-10 {
        return Err(Error::RankDeficient(format!(
            "singular value ratio {ratio:.3e} for parameters [{}]",
            names.join(", ")
        )));
    }
    Ok(())
}

/// `(JᵀJ)⁻¹` scaled by `scale`, or `None` if singular.
pub fn covariance(j: &DMatrix<f64>, scale: f64) -> Option<DMatrix<f64>> {
    let jtj = j.transpose() * j;
    jtj.try_inverse().map(|c| c * scale)
}
