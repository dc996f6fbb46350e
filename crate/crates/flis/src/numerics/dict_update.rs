//! Constrained dictionary update by exact block coordinate descent.
//!
//! Minimizes `g(D) = -2 tr(E D^T) + tr(D F D^T)` over dictionaries whose
//! columns lie in the closed unit ball, for a symmetric positive
//! semidefinite `F`. Restricted to column `j` the objective is an
//! isotropic quadratic with curvature `F[j][j]`, so the exact constrained
//! minimizer is the unconstrained step projected onto the ball:
//!
//! `d_j <- proj( d_j + (e_j - D F[:,j]) / F[j][j] )`, `proj(u) = u / max(1, ||u||)`.
//!
//! Each column move is an exact minimization, so a sweep can never
//! increase the objective; the training loop asserts exactly that on the
//! returned trace.

use crate::error::{FlisError, Result};
use crate::mat::{dot, require_finite, Mat};
use crate::numerics::chol::cholesky;
use crate::numerics::eigen::eig_extremes;

/// Most negative eigenvalue tolerated before `F` is rejected as non-PSD.
const PSD_TOL: f64 = 1e-8;
/// Columns with smaller Gram diagonal are left untouched.
const DEAD_COLUMN_TOL: f64 = 1e-10;
/// A sweep whose largest entry change is below this ends the update.
const SWEEP_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 100;

/// Runs the update and returns the new dictionary.
pub fn dict_update(e: &Mat, f: &Mat, d0: &Mat) -> Result<Mat> {
    dict_update_traced(e, f, d0).map(|(d, _)| d)
}

/// Like [`dict_update`], additionally returning the objective value at
/// entry and after every sweep (used to assert per-sweep monotonicity).
pub fn dict_update_traced(e: &Mat, f: &Mat, d0: &Mat) -> Result<(Mat, Vec<f64>)> {
    let (rows, k) = (d0.rows(), d0.cols());
    if e.rows() != rows || e.cols() != k {
        return Err(FlisError::InvalidArgument(format!(
            "dict_update: E is {}x{}, expected {}x{}",
            e.rows(),
            e.cols(),
            rows,
            k
        )));
    }
    if f.rows() != k || f.cols() != k {
        return Err(FlisError::InvalidArgument(format!(
            "dict_update: F is {}x{}, expected {}x{}",
            f.rows(),
            f.cols(),
            k,
            k
        )));
    }
    require_finite(e, "dict_update E")?;
    require_finite(f, "dict_update F")?;
    require_finite(d0, "dict_update D0")?;
    let mut asym = 0.0f64;
    let mut fmax = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            asym = asym.max((f.at(i, j) - f.at(j, i)).abs());
            fmax = fmax.max(f.at(i, j).abs());
        }
    }
    if asym > 1e-10 * fmax.max(1.0) {
        return Err(FlisError::InvalidArgument(
            "dict_update: F is not symmetric".into(),
        ));
    }

    // PSD gate: Cholesky of F + tol*I succeeds exactly when
    // lambda_min(F) > -tol. Only on failure is the actual eigenvalue
    // computed for the error report.
    let mut shifted = f.clone();
    for i in 0..k {
        *shifted.at_mut(i, i) += PSD_TOL;
    }
    if cholesky(&shifted).is_none() {
        let (lmin, _) = eig_extremes(f)?;
        if lmin < -PSD_TOL {
            return Err(FlisError::NotPsd { lambda_min: lmin });
        }
    }

    let mut d = d0.clone();
    let mut obj = objective(e, f, &d);
    let mut trace = vec![obj];
    let mut u = vec![0.0f64; rows]; // candidate column
    let mut v = vec![0.0f64; rows]; // D F[:,j] at the old iterate

    for _ in 0..MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..k {
            let fjj = f.at(j, j);
            if fjj < DEAD_COLUMN_TOL {
                continue;
            }
            // D is row-major, so each component of D F[:,j] is a
            // contiguous dot against row j of the symmetric F.
            let f_row = f.row(j);
            for r in 0..rows {
                v[r] = dot(d.row(r), f_row);
                u[r] = d.at(r, j) + (e.at(r, j) - v[r]) / fjj;
            }
            let nrm = dot(&u, &u).sqrt();
            if nrm > 1.0 {
                for slot in u.iter_mut() {
                    *slot /= nrm;
                }
            }
            // Objective change of the column move, with delta = u - d_j:
            // -2 e_j^T delta + 2 delta^T (D_old F[:,j]) + fjj ||delta||^2.
            let mut de = 0.0;
            let mut cross = 0.0;
            let mut dn = 0.0;
            for r in 0..rows {
                let delta = u[r] - d.at(r, j);
                de += e.at(r, j) * delta;
                cross += v[r] * delta;
                dn += delta * delta;
                max_delta = max_delta.max(delta.abs());
                *d.at_mut(r, j) = u[r];
            }
            obj += -2.0 * de + 2.0 * cross + fjj * dn;
        }
        trace.push(obj);
        if max_delta < SWEEP_TOL {
            break;
        }
    }
    Ok((d, trace))
}

/// `g(D) = -2 tr(E D^T) + tr(D F D^T)`.
pub fn objective(e: &Mat, f: &Mat, d: &Mat) -> f64 {
    let df = d.mul(f);
    -2.0 * dot(e.data(), d.data()) + dot(df.data(), d.data())
}
