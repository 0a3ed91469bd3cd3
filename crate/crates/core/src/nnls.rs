//! Lawson–Hanson active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default tolerance for the dual feasibility test and the passive solve.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `‖Ax − b‖` at the returned `x`.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Solves `min ‖Ax − b‖` subject to `x ≥ 0`.
///
/// `max_iter` bounds the number of outer (variable-freeing) iterations.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    let (rows, n) = a.shape();
    if b.len() != rows {
        return Err(Error::ShapeMismatch {
            expected: (rows, 1),
            found: (b.len(), 1),
        });
    }
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Ok(NnlsSolution {
            residual_norm: b.norm(),
            x,
            iterations: 0,
        });
    }
    let scale = a.amax().max(1.0) * b.amax().max(1.0);
    let mut passive = vec![false; n];
    let mut iterations = 0;

    loop {
        let grad = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let j = match candidate {
            Some(j) if grad[j] > tol * scale => j,
            _ => break,
        };
        if iterations >= max_iter {
            return Err(Error::NnlsNotConverged(max_iter));
        }
        iterations += 1;
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = passive_solve(a, b, &idx, tol);
            if idx.iter().zip(z.iter()).all(|(_, &v)| v > tol) {
                for (&k, &v) in idx.iter().zip(z.iter()) {
                    x[k] = v;
                }
                break;
            }
            // Step back toward the previous iterate until a passive
            // variable reaches zero.
            let alpha = idx
                .iter()
                .zip(z.iter())
                .filter(|(_, &v)| v <= tol)
                .map(|(&k, &v)| x[k] / (x[k] - v))
                .fold(f64::INFINITY, f64::min);
            for (&k, &v) in idx.iter().zip(z.iter()) {
                x[k] += alpha * (v - x[k]);
                if x[k].abs() <= tol {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }

    let residual_norm = (a * &x - b).norm();
    Ok(NnlsSolution {
        x,
        residual_norm,
        iterations,
    })
}

fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize], tol: f64) -> DVector<f64> {
    let sub = a.select_columns(idx);
    let svd = sub.svd(true, true);
    let eps = tol * svd.singular_values.max().max(1.0);
    svd.solve(b, eps).expect("SVD computed with both factors")
}
