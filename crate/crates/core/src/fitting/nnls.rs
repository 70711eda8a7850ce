//! Non-negative and simplex-constrained linear least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lawson–Hanson active-set solution of `min ‖Ax − b‖` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::InvalidDimension(format!("rhs has {} rows, matrix {m}", b.len())));
    }
    let scale = a.amax().max(1.0) * b.amax().max(1.0);
    let tol = 10.0 * f64::EPSILON * scale * (m.max(n) as f64);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 30;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n).filter(|&i| !passive[i]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        if w[t] <= tol {
            break;
        }
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = a.select_columns(&idx);
            let z_sub = sub
                .clone()
                .svd(true, true)
                .solve(b, 1e-14)
                .map_err(|e| Error::Degenerate(e.to_string()))?;
            if z_sub.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z_sub[k];
                }
                break;
            }
            // step back toward feasibility
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z_sub[k] <= 0.0 {
                    let denom = x[i] - z_sub[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z_sub[k] - x[i]);
                if x[i] <= tol.min(1e-300) || (z_sub[k] <= 0.0 && x[i] <= 1e-15) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if idx.iter().all(|&i| !passive[i]) {
                break;
            }
        }
    }
    Ok(x)
}

/// `min ‖Ax − b‖` over the probability simplex (`x ≥ 0`, `Σx = 1`).
///
/// The sum constraint enters as a heavily weighted extra row; the result is
/// renormalized exactly afterwards.
pub fn simplex_lsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    let weight = 1e4 * a.amax().max(1.0) * (m as f64).sqrt();
    let mut aa = DMatrix::zeros(m + 1, n);
    aa.view_mut((0, 0), (m, n)).copy_from(a);
    aa.row_mut(m).fill(weight);
    let mut bb = DVector::zeros(m + 1);
    bb.rows_mut(0, m).copy_from(b);
    bb[m] = weight;
    let x = nnls(&aa, &bb)?;
    let s = x.sum();
    if !(s > 0.0) {
        return Err(Error::Degenerate("simplex fit returned the zero vector".into()));
    }
    Ok(x / s)
}
