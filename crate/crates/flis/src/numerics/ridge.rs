//! Closed-form ridge regression for the linear classifier initialization.

use crate::error::{FlisError, Result};
use crate::mat::{require_finite, Mat};
use crate::numerics::chol::{chol_solve, cholesky};

/// Solves `W = H X^T (X X^T + lambda1 I)^{-1}` for codes `X` (K x N) and
/// label targets `H` (C x N), returning `W` (C x K).
///
/// The normal system is solved through a Cholesky factorization; a ridge
/// of `lambda1 = 0` on a rank-deficient Gram is reported as a singular
/// system rather than silently regularized.
pub fn ridge_classifier(codes: &Mat, labels: &Mat, lambda1: f64) -> Result<Mat> {
    if codes.cols() != labels.cols() {
        return Err(FlisError::InvalidArgument(format!(
            "ridge: {} code columns vs {} label columns",
            codes.cols(),
            labels.cols()
        )));
    }
    if !(lambda1 >= 0.0 && lambda1.is_finite()) {
        return Err(FlisError::InvalidArgument(format!(
            "ridge lambda1 must be finite and nonnegative, got {lambda1}"
        )));
    }
    require_finite(codes, "ridge codes")?;
    require_finite(labels, "ridge labels")?;

    let k = codes.rows();
    let c = labels.rows();
    let mut a = codes.gram_rows(); // X X^T
    for i in 0..k {
        *a.at_mut(i, i) += lambda1;
    }
    let l = cholesky(&a).ok_or(FlisError::Singular("ridge_classifier"))?;

    let bt = codes.mul_bt(labels); // X H^T, K x C
    let mut w = Mat::zeros(c, k);
    let mut col = vec![0.0f64; k];
    for j in 0..c {
        for i in 0..k {
            col[i] = bt.at(i, j);
        }
        chol_solve(&l, &mut col);
        for i in 0..k {
            *w.at_mut(j, i) = col[i];
        }
    }
    Ok(w)
}
