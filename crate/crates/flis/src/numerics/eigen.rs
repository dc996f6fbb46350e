//! Extreme eigenvalues of symmetric matrices via cyclic Jacobi rotations.
//!
//! The matrices this crate cares about are coefficient Grams (`X Xᵀ`) and
//! dictionary-update targets, at most a few hundred rows, so a full Jacobi
//! diagonalization is cheap and gives every eigenvalue to machine
//! precision. Only the extremes are returned.

use crate::error::{FlisError, Result};
use crate::mat::Mat;

/// Returns `(lambda_min, lambda_max)` of a symmetric matrix.
///
/// Symmetry is required up to `1e-10` (scaled by `max(1, max|S|)`); an
/// asymmetric input is rejected rather than silently symmetrized. Results
/// are accurate to a relative `1e-8` comfortably, since Jacobi iteration
/// drives the off-diagonal mass to machine epsilon.
pub fn eig_extremes(s: &Mat) -> Result<(f64, f64)> {
    let n = s.rows();
    if n == 0 || s.cols() != n {
        return Err(FlisError::InvalidArgument(format!(
            "eig_extremes needs a nonempty square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    crate::mat::require_finite(s, "eig_extremes input")?;

    let mut max_abs: f64 = 0.0;
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            max_abs = max_abs.max(s.at(i, j).abs());
            asym = asym.max((s.at(i, j) - s.at(j, i)).abs());
        }
    }
    if asym > 1e-10 * max_abs.max(1.0) {
        return Err(FlisError::InvalidArgument(format!(
            "eig_extremes input is asymmetric (max |S - S^T| = {asym:.3e})"
        )));
    }

    if n == 1 {
        let v = s.at(0, 0);
        return Ok((v, v));
    }

    // Work on the exactly symmetrized copy.
    let mut a = Mat::from_fn(n, n, |i, j| 0.5 * (s.at(i, j) + s.at(j, i)));
    let scale = a.frob_norm().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.at(p, q) * a.at(p, q);
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.at(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.at(p, p);
                let aqq = a.at(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a.at(k, p);
                    let akq = a.at(k, q);
                    let new_kp = c * akp - sn * akq;
                    let new_kq = sn * akp + c * akq;
                    *a.at_mut(k, p) = new_kp;
                    *a.at_mut(p, k) = new_kp;
                    *a.at_mut(k, q) = new_kq;
                    *a.at_mut(q, k) = new_kq;
                }
                *a.at_mut(p, p) = app - t * apq;
                *a.at_mut(q, q) = aqq + t * apq;
                *a.at_mut(p, q) = 0.0;
                *a.at_mut(q, p) = 0.0;
            }
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        lo = lo.min(a.at(i, i));
        hi = hi.max(a.at(i, i));
    }
    Ok((lo, hi))
}
