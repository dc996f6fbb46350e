//! Batch orthogonal matching pursuit against a fixed dictionary.
//!
//! The Gram matrix `D^T D` and the initial correlations `D^T Y` are
//! computed once per call; each signal is then coded independently with a
//! progressively extended Cholesky factor of the selected sub-Gram, so no
//! explicit residual vector is ever formed.

use rayon::prelude::*;

use crate::error::{FlisError, Result};
use crate::mat::{axpy, dot, require_finite, Mat};

/// Codes every column of `signals` with at most `sparsity` atoms of `dict`.
///
/// Atoms are expected to have unit Euclidean norm (callers normalize).
/// Selection is deterministic: when the largest absolute correlations tie
/// within `1e-12`, the lowest atom index wins. A signal stops early once
/// every remaining correlation is below `1e-12` in magnitude (its residual
/// is already at numerical zero) or the next atom would make the selected
/// sub-Gram numerically singular.
///
/// ```
/// use flis::mat::Mat;
/// use flis::numerics::omp_batch;
///
/// let dict = Mat::eye(3);
/// let y = Mat::from_vec(3, 1, vec![0.0, 2.0, 0.0]);
/// let x = omp_batch(&dict, &y, 1).unwrap();
/// assert_eq!(x.data(), &[0.0, 2.0, 0.0]);
/// ```
pub fn omp_batch(dict: &Mat, signals: &Mat, sparsity: usize) -> Result<Mat> {
    omp_batch_with_errors(dict, signals, sparsity).map(|(x, _)| x)
}

/// Like [`omp_batch`], additionally returning each column's squared
/// residual norm `||y - D x||^2` (exact for the least-squares refit, via
/// `||y||^2 - gamma^T (D^T y)_S`).
pub fn omp_batch_with_errors(
    dict: &Mat,
    signals: &Mat,
    sparsity: usize,
) -> Result<(Mat, Vec<f64>)> {
    let (d, k) = (dict.rows(), dict.cols());
    let n = signals.cols();
    if sparsity == 0 || sparsity > k {
        return Err(FlisError::InvalidArgument(format!(
            "omp sparsity {sparsity} outside 1..={k}"
        )));
    }
    if signals.rows() != d {
        return Err(FlisError::InvalidArgument(format!(
            "omp signal length {} does not match dictionary rows {d}",
            signals.rows()
        )));
    }
    require_finite(dict, "omp dictionary")?;
    require_finite(signals, "omp signals")?;

    let gram = dict.gram_cols(); // K x K
    let corr = signals.tr_mul(dict); // n x K, row j = D^T y_j
    let mut norms2 = vec![0.0f64; n];
    for r in 0..d {
        let row = signals.row(r);
        for (j, &v) in row.iter().enumerate() {
            norms2[j] += v * v;
        }
    }

    let coded: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|j| omp_single(&gram, corr.row(j), norms2[j], sparsity))
        .collect();

    let mut x = Mat::zeros(k, n);
    let mut errors = vec![0.0f64; n];
    for (j, (support, gamma, res2)) in coded.into_iter().enumerate() {
        for (s, &atom) in support.iter().enumerate() {
            *x.at_mut(atom, j) = gamma[s];
        }
        errors[j] = res2;
    }
    Ok((x, errors))
}

fn omp_single(gram: &Mat, h0: &[f64], norm2: f64, sparsity: usize) -> (Vec<usize>, Vec<f64>, f64) {
    let k = gram.rows();
    let mut h = h0.to_vec();
    let mut in_support = vec![false; k];
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut gamma: Vec<f64> = Vec::new();
    // Packed lower-triangular factor of gram[support][support].
    let mut lfac = vec![0.0f64; sparsity * sparsity];
    let mut w = vec![0.0f64; sparsity];

    for _ in 0..sparsity {
        let mut max_v = 0.0f64;
        for (i, &hi) in h.iter().enumerate() {
            if !in_support[i] {
                max_v = max_v.max(hi.abs());
            }
        }
        if max_v < 1e-12 {
            break;
        }
        let atom = (0..k)
            .find(|&i| !in_support[i] && h[i].abs() >= max_v - 1e-12)
            .expect("max attained above");

        // Extend the Cholesky factor with the new atom.
        let s = support.len();
        for (i, &a) in support.iter().enumerate() {
            w[i] = gram.at(a, atom);
        }
        // Forward solve L w' = w against the packed factor.
        for i in 0..s {
            let mut v = w[i];
            for t in 0..i {
                v -= lfac[i * sparsity + t] * w[t];
            }
            w[i] = v / lfac[i * sparsity + i];
        }
        let diag2 = gram.at(atom, atom) - dot(&w[..s], &w[..s]);
        if diag2 <= 1e-12 {
            break; // atom is numerically dependent on the selection
        }
        lfac[s * sparsity..s * sparsity + s].copy_from_slice(&w[..s]);
        lfac[s * sparsity + s] = diag2.sqrt();
        support.push(atom);
        in_support[atom] = true;

        // Least-squares refit of all selected coefficients.
        let m = support.len();
        gamma.clear();
        gamma.extend(support.iter().map(|&a| h0[a]));
        for i in 0..m {
            let mut v = gamma[i];
            for t in 0..i {
                v -= lfac[i * sparsity + t] * gamma[t];
            }
            gamma[i] = v / lfac[i * sparsity + i];
        }
        for i in (0..m).rev() {
            let mut v = gamma[i];
            for t in i + 1..m {
                v -= lfac[t * sparsity + i] * gamma[t];
            }
            gamma[i] = v / lfac[i * sparsity + i];
        }

        // Refresh correlations: h = h0 - G[:, S] gamma.
        h.copy_from_slice(h0);
        for (t, &a) in support.iter().enumerate() {
            axpy(-gamma[t], gram.row(a), &mut h);
        }
    }

    let explained = support
        .iter()
        .zip(&gamma)
        .map(|(&a, &g)| g * h0[a])
        .sum::<f64>();
    let res2 = (norm2 - explained).max(0.0);
    (support, gamma, res2)
}
