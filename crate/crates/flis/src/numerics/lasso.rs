//! Nonnegative lasso on the Gram system.
//!
//! Minimizes `||m - D a||^2 + lambda * sum(a)` over `a >= 0`. The primary
//! solver pivots on the active set: it solves the stationarity system of
//! the current support exactly (Cholesky), steps back to the feasible set
//! when a support coefficient would go negative, and admits the worst
//! violated coordinate until none remains. Coherent dictionaries that
//! stall cyclic coordinate descent for hundreds of sweeps resolve in a
//! handful of pivots this way. Cyclic coordinate descent with an
//! incrementally maintained gradient is kept as the fallback for the rare
//! solve whose support Gram is too ill-conditioned to factor.

use crate::error::{FlisError, Result};
use crate::mat::{axpy, require_finite, Mat};
use crate::numerics::chol::{chol_solve, cholesky};

/// Coordinate-descent sweeps stop once no coordinate moves by more than
/// this.
const COORD_TOL: f64 = 1e-8;
/// Hard cap on coordinate-descent sweeps.
const MAX_SWEEPS: usize = 10_000;
/// A zero coordinate joins the active set only when its gradient pushes
/// into the feasible region by more than this.
const KKT_TOL: f64 = 1e-9;
/// Gram diagonal below which an atom is treated as zero and never coded.
const DEAD_ATOM: f64 = 1e-12;

/// Solves one nonnegative lasso problem from scratch.
///
/// For repeated solves against the same dictionary use [`GramLasso`],
/// which reuses the Gram matrix.
///
/// ```
/// use flis::mat::Mat;
/// use flis::numerics::nonneg_lasso;
///
/// // Orthonormal dictionary, lambda = 0: recovers nonnegative coefficients.
/// let dict = Mat::eye(2);
/// let a = nonneg_lasso(&dict, &[0.5, 2.0], 0.0).unwrap();
/// assert!((a[0] - 0.5).abs() < 1e-10 && (a[1] - 2.0).abs() < 1e-10);
/// ```
pub fn nonneg_lasso(dict: &Mat, target: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let solver = GramLasso::new(dict, lambda)?;
    if target.len() != dict.rows() {
        return Err(FlisError::InvalidArgument(format!(
            "lasso target length {} does not match dictionary rows {}",
            target.len(),
            dict.rows()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(FlisError::InvalidArgument(
            "lasso target contains non-finite entries".into(),
        ));
    }
    let mut q = vec![0.0f64; dict.cols()];
    for r in 0..dict.rows() {
        axpy(target[r], dict.row(r), &mut q);
    }
    Ok(solver.solve_correlations(&q))
}

/// Precomputed Gram-side state for solving many nonnegative lasso problems
/// against one dictionary (one Gram, many right-hand sides).
pub struct GramLasso {
    gram: Mat,
    lambda: f64,
}

impl GramLasso {
    pub fn new(dict: &Mat, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(FlisError::InvalidArgument(format!(
                "lasso lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        require_finite(dict, "lasso dictionary")?;
        Ok(GramLasso { gram: dict.gram_cols(), lambda })
    }

    pub fn from_gram(gram: Mat, lambda: f64) -> Self {
        debug_assert_eq!(gram.rows(), gram.cols());
        GramLasso { gram, lambda }
    }

    /// Solves given the correlations `q = D^T m`.
    ///
    /// Coordinates whose Gram diagonal is below `1e-12` (zero atoms) stay
    /// at zero. The returned point satisfies the stationarity conditions:
    /// active coordinates have a vanishing subgradient, inactive ones a
    /// nonnegative one.
    pub fn solve_correlations(&self, q: &[f64]) -> Vec<f64> {
        let k = self.gram.rows();
        debug_assert_eq!(q.len(), k);
        let mut alpha = vec![0.0f64; k];
        if !self.active_set(&mut alpha, q) {
            self.descend_from(&mut alpha, q);
        }
        alpha
    }

    /// Like [`Self::solve_correlations`] but starting from `warm`
    /// (negative entries are clamped to the feasible set first). The
    /// minimizer is the same; a nearby start just needs fewer pivots,
    /// which is what makes scanning a slice pixel by pixel affordable.
    pub fn solve_correlations_warm(&self, q: &[f64], warm: &[f64]) -> Vec<f64> {
        let k = self.gram.rows();
        debug_assert_eq!(q.len(), k);
        debug_assert_eq!(warm.len(), k);
        let mut alpha: Vec<f64> = warm.iter().map(|&v| v.max(0.0)).collect();
        if !self.active_set(&mut alpha, q) {
            self.descend_from(&mut alpha, q);
        }
        alpha
    }

    /// Active-set pivoting from the feasible point `alpha`. On the current
    /// support the stationarity system `G_SS x = q_S - lambda/2` is solved
    /// exactly; if any `x` is nonpositive, `alpha` steps toward `x` until
    /// the first coordinate hits zero and that coordinate leaves the
    /// support (each step shrinks the objective, so supports cannot
    /// cycle). Once the support solution is feasible, the most violated
    /// zero coordinate joins, until every zero coordinate satisfies its
    /// sign condition. Returns `false` — leaving `alpha` feasible but
    /// unconverged — when a support Gram cannot be factored or the pivot
    /// budget runs out; the caller then falls back to coordinate descent.
    fn active_set(&self, alpha: &mut [f64], q: &[f64]) -> bool {
        let k = self.gram.rows();
        let half_lambda = 0.5 * self.lambda;
        let mut support: Vec<usize> = Vec::new();
        for j in 0..k {
            if alpha[j] <= 0.0 {
                alpha[j] = 0.0;
            } else if self.gram.at(j, j) < DEAD_ATOM {
                alpha[j] = 0.0;
            } else {
                support.push(j);
            }
        }

        let mut budget = 4 * k + 64;
        loop {
            // Solve on the support, stepping back to feasibility as needed.
            while !support.is_empty() {
                if budget == 0 {
                    return false;
                }
                budget -= 1;
                let s = support.len();
                let gss =
                    Mat::from_fn(s, s, |i, j| self.gram.at(support[i], support[j]));
                let Some(l) = cholesky(&gss) else { return false };
                let mut x: Vec<f64> = support.iter().map(|&j| q[j] - half_lambda).collect();
                chol_solve(&l, &mut x);
                if x.iter().all(|&v| v > 0.0) {
                    for (i, &j) in support.iter().enumerate() {
                        alpha[j] = x[i];
                    }
                    break;
                }
                // Largest feasible step toward x; the limiting coordinates
                // land exactly on zero and leave the support.
                let mut theta = 1.0f64;
                for (i, &j) in support.iter().enumerate() {
                    if x[i] <= 0.0 {
                        let t = alpha[j] / (alpha[j] - x[i]);
                        theta = theta.min(t);
                    }
                }
                for (i, &j) in support.iter().enumerate() {
                    let stepped = alpha[j] + theta * (x[i] - alpha[j]);
                    // Limiting coordinates land on zero up to rounding.
                    alpha[j] =
                        if x[i] <= 0.0 && stepped <= 1e-15 { 0.0 } else { stepped.max(0.0) };
                }
                support.retain(|&j| alpha[j] > 0.0);
            }

            // Sign conditions of the zero coordinates under the exact
            // gradient; the worst violator joins the support.
            let mut g = q.to_vec();
            for &j in &support {
                axpy(-alpha[j], self.gram.row(j), &mut g);
            }
            let mut best = usize::MAX;
            let mut worst = KKT_TOL;
            for j in 0..k {
                if alpha[j] == 0.0 && self.gram.at(j, j) >= DEAD_ATOM {
                    let r = g[j] - half_lambda;
                    if r > worst {
                        worst = r;
                        best = j;
                    }
                }
            }
            if best == usize::MAX {
                return true;
            }
            if budget == 0 {
                return false;
            }
            budget -= 1;
            support.push(best);
        }
    }

    /// Runs coordinate descent starting from the feasible point `alpha`.
    fn descend_from(&self, alpha: &mut [f64], q: &[f64]) {
        let mut g = q.to_vec();
        for j in 0..self.gram.rows() {
            if alpha[j] != 0.0 {
                axpy(-alpha[j], self.gram.row(j), &mut g);
            }
        }
        self.descend(alpha, &mut g);
    }

    /// Two-phase coordinate descent. The outer sweep visits every
    /// coordinate with an exactly-maintained gradient — when nothing moves
    /// beyond [`COORD_TOL`] there, the KKT conditions hold and we stop. In
    /// between, the inner loop iterates only the current support with the
    /// gradient maintained on the support alone (entries outside go stale
    /// and are repaired in one batch afterwards), so the expensive full
    /// `O(K)` row update is paid once per support change instead of once
    /// per sweep. Both phases do exact coordinate minimizations, so the
    /// objective never increases and the minimizer is the same.
    fn descend(&self, alpha: &mut [f64], g: &mut [f64]) {
        let k = self.gram.rows();
        let half_lambda = 0.5 * self.lambda;
        let mut active: Vec<usize> = Vec::new();
        let mut moved: Vec<f64> = vec![0.0; k];
        for _ in 0..MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            for j in 0..k {
                let gjj = self.gram.at(j, j);
                if gjj < 1e-12 {
                    continue;
                }
                let new = ((g[j] + gjj * alpha[j] - half_lambda) / gjj).max(0.0);
                let delta = new - alpha[j];
                if delta != 0.0 {
                    alpha[j] = new;
                    axpy(-delta, self.gram.row(j), g);
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < COORD_TOL {
                return;
            }

            active.clear();
            active.extend((0..k).filter(|&j| alpha[j] > 0.0));
            if active.len() == k {
                continue;
            }
            for &j in &active {
                moved[j] = 0.0;
            }
            for _ in 0..MAX_SWEEPS {
                let mut inner_max = 0.0f64;
                for idx in 0..active.len() {
                    let j = active[idx];
                    let gjj = self.gram.at(j, j);
                    if gjj < 1e-12 {
                        continue;
                    }
                    let new = ((g[j] + gjj * alpha[j] - half_lambda) / gjj).max(0.0);
                    let delta = new - alpha[j];
                    if delta != 0.0 {
                        alpha[j] = new;
                        moved[j] += delta;
                        let row = self.gram.row(j);
                        for &t in &active {
                            g[t] -= delta * row[t];
                        }
                        inner_max = inner_max.max(delta.abs());
                    }
                }
                if inner_max < COORD_TOL {
                    break;
                }
            }
            // Repair the stale gradient entries outside the support.
            let mut in_support = vec![false; k];
            for &j in &active {
                in_support[j] = true;
            }
            for &j in &active {
                if moved[j] != 0.0 {
                    let row = self.gram.row(j);
                    for (t, stale) in in_support.iter().enumerate() {
                        if !stale {
                            g[t] -= moved[j] * row[t];
                        }
                    }
                }
            }
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}
