//! Discriminative dictionary training.
//!
//! Each tissue class gets a dictionary `D` (unit-norm atoms over the
//! feature space) and a linear classifier `W` (3 rows of class scores per
//! atom), fit jointly on the class's own features `Y` and a complement
//! set `Yhat` drawn from the other classes. The training objective pulls
//! reconstruction and label consistency down on the in-class features
//! while pushing them up on the complement:
//!
//! ```text
//! (1/N)  { ||Y    - D X   ||^2 + beta ||H      - W X   ||^2 }
//! - (rho/Nh) { ||Yhat - D Xhat||^2 + beta ||Htilde - W Xhat||^2 }
//! ```
//!
//! with every code column capped at `L` nonzeros. Stacking features over
//! `sqrt(beta)`-scaled labels turns both quadratic terms into a single
//! reconstruction problem for the joint matrix `[D; sqrt(beta) W]`, so one
//! alternation of batch OMP and the block-coordinate dictionary update
//! drives the whole thing.
//!
//! The subtracted term makes the problem unbounded when `rho` is too
//! large; [`rho_max`] computes the largest provably safe value for the
//! current codes and the loop clamps the applied weight to 90% of it.
//! Objective values are tracked at the first iteration's clamped weight
//! so they are comparable across iterations, and the best-scoring
//! iterate is the one returned.

mod odl;

pub use odl::{estimate_sparsity, odl_init, odl_init_traced, OdlOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlisError, Result};
use crate::imaging::{TissueClass, CLASS_COUNT};
use crate::mat::Mat;
use crate::numerics::{dict_update_traced, eig_extremes, omp_batch, omp_batch_with_errors, ridge_classifier};

/// Norm below which a learned atom's feature block counts as collapsed.
const ATOM_COLLAPSE_TOL: f64 = 1e-8;
/// Salt so atom re-seeding never reuses the initialization stream.
const RESEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Training data for one class of one intensity partition.
///
/// Columns of `y` are in-class feature vectors, columns of `y_hat` are
/// complement features from the other classes (`y_hat` may be empty).
/// `h` and `h_tilde` hold the 3-row label targets for the respective
/// columns; for per-class training both are the class's own one-hot
/// column tiled, which is what makes the subtracted term penalize any
/// tendency to map complement features onto this class.
#[derive(Debug, Clone)]
pub struct ClassTrainingSet {
    pub y: Mat,
    pub h: Mat,
    pub y_hat: Mat,
    pub h_tilde: Mat,
}

impl ClassTrainingSet {
    /// In-class features plus a complement pool, labels tiled from the
    /// class's one-hot column.
    pub fn per_class(class: TissueClass, y: Mat, y_hat: Mat) -> Result<Self> {
        let one_hot = |cols: usize| {
            Mat::from_fn(CLASS_COUNT, cols, |r, _| if r == class.index() { 1.0 } else { 0.0 })
        };
        let h = one_hot(y.cols());
        let h_tilde = one_hot(y_hat.cols());
        let set = Self { y, h, y_hat, h_tilde };
        set.validate()?;
        Ok(set)
    }

    /// Merged multi-class features with their true one-hot labels and no
    /// complement; training this set is plain label-consistent
    /// dictionary learning.
    pub fn joint(y: Mat, h: Mat) -> Result<Self> {
        let d = y.rows();
        let set = Self { y, h, y_hat: Mat::zeros(d, 0), h_tilde: Mat::zeros(CLASS_COUNT, 0) };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let (d, n) = (self.y.rows(), self.y.cols());
        let nh = self.y_hat.cols();
        if d == 0 || n == 0 {
            return Err(FlisError::InvalidArgument(
                "training set needs at least one feature column".into(),
            ));
        }
        if self.h.rows() != CLASS_COUNT || self.h.cols() != n {
            return Err(FlisError::InvalidArgument(format!(
                "label matrix is {}x{}, expected {}x{}",
                self.h.rows(),
                self.h.cols(),
                CLASS_COUNT,
                n
            )));
        }
        if self.y_hat.rows() != d {
            return Err(FlisError::InvalidArgument(format!(
                "complement features have {} rows, expected {}",
                self.y_hat.rows(),
                d
            )));
        }
        if self.h_tilde.rows() != CLASS_COUNT || self.h_tilde.cols() != nh {
            return Err(FlisError::InvalidArgument(format!(
                "complement labels are {}x{}, expected {}x{}",
                self.h_tilde.rows(),
                self.h_tilde.cols(),
                CLASS_COUNT,
                nh
            )));
        }
        for (m, what) in [
            (&self.y, "features"),
            (&self.h, "labels"),
            (&self.y_hat, "complement features"),
            (&self.h_tilde, "complement labels"),
        ] {
            crate::mat::require_finite(m, what)?;
        }
        Ok(())
    }
}

/// Weights and sizes of the training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FlisHyperParams {
    /// Atoms per class dictionary (`K`).
    pub dict_size: usize,
    /// Complement repulsion weight (`rho`), clamped per iteration to 90%
    /// of the admissible bound.
    pub rho: f64,
    /// Label-consistency weight (`beta`).
    pub beta: f64,
    /// l1 weight for initialization coding and inference (`lambda`).
    pub lambda: f64,
    /// Ridge weight for the classifier initialization (`lambda1`).
    pub lambda1: f64,
    /// Maximum alternation iterations.
    pub max_iters: usize,
    /// Relative joint-dictionary change that counts as converged.
    pub tol: f64,
}

impl Default for FlisHyperParams {
    fn default() -> Self {
        Self {
            dict_size: 80,
            rho: 0.5,
            beta: 2.0,
            lambda: 0.1,
            lambda1: 0.01,
            max_iters: 30,
            tol: 1e-4,
        }
    }
}

impl FlisHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FlisError::InvalidArgument(format!("hyperparams: {what}")));
        if self.dict_size == 0 {
            return bad("dict_size must be at least 1");
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be finite and nonnegative");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and positive");
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be finite and nonnegative");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("tol must be finite and nonnegative");
        }
        Ok(())
    }
}

/// One class's learned dictionary (`d x K`, unit columns) and atom
/// classifier (`3 x K`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub dict: Mat,
    pub classifier: Mat,
}

/// Concatenation of the three class models of one intensity partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionModel {
    pub dict: Mat,
    pub classifier: Mat,
}

impl PartitionModel {
    pub fn feature_len(&self) -> usize {
        self.dict.rows()
    }

    pub fn atoms(&self) -> usize {
        self.dict.cols()
    }
}

/// Side-by-side concatenation of per-class models, class order
/// brain, CSF, subdural.
pub fn assemble_partition_model(models: &[ClassModel]) -> Result<PartitionModel> {
    if models.len() != CLASS_COUNT {
        return Err(FlisError::InvalidArgument(format!(
            "partition assembly needs {} class models, got {}",
            CLASS_COUNT,
            models.len()
        )));
    }
    let d = models[0].dict.rows();
    for (i, m) in models.iter().enumerate() {
        if m.dict.rows() != d {
            return Err(FlisError::InvalidArgument(format!(
                "class model {i} has {} feature rows, expected {d}",
                m.dict.rows()
            )));
        }
        if m.classifier.rows() != CLASS_COUNT || m.classifier.cols() != m.dict.cols() {
            return Err(FlisError::InvalidArgument(format!(
                "class model {i} classifier is {}x{}, expected {}x{}",
                m.classifier.rows(),
                m.classifier.cols(),
                CLASS_COUNT,
                m.dict.cols()
            )));
        }
    }
    let dict = models[1..].iter().fold(models[0].dict.clone(), |acc, m| acc.hstack(&m.dict));
    let classifier = models[1..]
        .iter()
        .fold(models[0].classifier.clone(), |acc, m| acc.hstack(&m.classifier));
    Ok(PartitionModel { dict, classifier })
}

/// Largest complement weight for which the quadratic coefficient
/// `(1/N) X X^T - (rho/Nh) Xhat Xhat^T` provably stays positive
/// semidefinite: `(Nh/N) * lambda_min(X X^T) / lambda_max(Xhat Xhat^T)`.
///
/// An empty complement or one with no energy puts no constraint on rho
/// (`+inf`); rank-deficient in-class codes force the bound to zero.
pub fn rho_max(x: &Mat, x_hat: &Mat) -> Result<f64> {
    if x.cols() == 0 {
        return Err(FlisError::InvalidArgument(
            "rho_max needs at least one in-class code column".into(),
        ));
    }
    if x_hat.rows() != x.rows() {
        return Err(FlisError::InvalidArgument(format!(
            "rho_max: code row counts differ, {} vs {}",
            x.rows(),
            x_hat.rows()
        )));
    }
    if x_hat.cols() == 0 {
        return Ok(f64::INFINITY);
    }
    let lambda_min = eig_extremes(&x.gram_rows())?.0.max(0.0);
    let lambda_max = eig_extremes(&x_hat.gram_rows())?.1;
    if lambda_max <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(x_hat.cols() as f64 / x.cols() as f64 * lambda_min / lambda_max)
}

/// Per-iteration diagnostics of the training loop.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    /// Admissibility bound from [`rho_max`] for this iteration's codes.
    pub rho_bound: f64,
    /// Complement weight actually applied (`min(rho, 0.9 * bound)`).
    pub rho_eff: f64,
    /// Smallest eigenvalue of the dictionary-update coefficient `F`.
    pub lambda_min_f: f64,
    /// Training objective at this iteration's codes, evaluated at the
    /// fixed tracking weight [`TrainTrace::objective_rho`].
    pub objective: f64,
    /// Surrogate values from the dictionary update, entry value first,
    /// then one per sweep (non-increasing).
    pub dict_sweep_objectives: Vec<f64>,
}

/// Summary of one [`train_class`] run.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    /// Estimated per-column nonzero budget `L`.
    pub sparsity: usize,
    /// Complement weight the objective column is evaluated at (the first
    /// iteration's effective weight).
    pub objective_rho: f64,
    /// Objective at the stacked initialization.
    pub initial_objective: f64,
    /// Objective of the returned model's iterate; never above
    /// `initial_objective`.
    pub final_objective: f64,
    /// Index of the returned iterate (0 = initialization).
    pub best_iteration: usize,
    /// Whether the relative dictionary change fell below `tol` before
    /// `max_iters` updates.
    pub converged: bool,
    /// One entry per completed update iteration.
    pub iterations: Vec<IterationTrace>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassModel,
    pub trace: TrainTrace,
}

/// Trains one class model: reconstruction-only initialization, sparsity
/// estimate, ridge classifier, then joint alternation on the stacked
/// system with the complement weight clamped each iteration.
pub fn train_class(ts: &ClassTrainingSet, hp: &FlisHyperParams, seed: u64) -> Result<TrainOutcome> {
    hp.validate()?;
    ts.validate()?;
    let d = ts.y.rows();
    let n = ts.y.cols();
    let nh = ts.y_hat.cols();
    let k = hp.dict_size;

    let (d0, x0) = odl_init(&ts.y, k, hp.lambda, seed)?;
    let sparsity = estimate_sparsity(&x0);

    // Classifier initialization: code in-class and complement features
    // against the initial dictionary and ridge-regress the labels.
    let ybar = ts.y.hstack(&ts.y_hat);
    let xbar0 = omp_batch(&d0, &ybar, sparsity)?;
    let hbar = ts.h.hstack(&ts.h_tilde);
    let w0 = ridge_classifier(&xbar0, &hbar, hp.lambda1)?;

    // Stacked system: features over sqrt(beta)-weighted labels, joint
    // dictionary [D; sqrt(beta) W] with unit columns.
    let sqrt_beta = hp.beta.sqrt();
    let scaled = |m: &Mat| {
        let mut s = m.clone();
        s.scale(sqrt_beta);
        s
    };
    let y_aug = ts.y.vstack(&scaled(&ts.h));
    let yhat_aug = ts.y_hat.vstack(&scaled(&ts.h_tilde));
    let ybar_aug = y_aug.hstack(&yhat_aug);
    let mut joint = d0.vstack(&scaled(&w0));
    for j in 0..k {
        joint.scale_col(j, 1.0 / joint.col_norm(j)); // >= 1: top block is unit
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ RESEED_SALT);
    let mut iterations: Vec<IterationTrace> = Vec::new();
    let mut objective_rho: Option<f64> = None;
    let mut best: Option<(f64, Mat, usize)> = None;
    let mut converged = false;
    let mut stop = false;
    let mut iter = 0usize;

    loop {
        let (xbar, errs) = omp_batch_with_errors(&joint, &ybar_aug, sparsity)?;
        let x = xbar.col_block(0, n);
        let x_hat = xbar.col_block(n, n + nh);
        let rho_bound = rho_max(&x, &x_hat)?;
        let rho_eff = if rho_bound.is_finite() { hp.rho.min(0.9 * rho_bound) } else { hp.rho };
        let rho_track = *objective_rho.get_or_insert(rho_eff);
        let objective = split_objective(&errs, n, rho_track);
        if best.as_ref().map_or(true, |b| objective < b.0) {
            best = Some((objective, joint.clone(), iter));
        }
        if stop || iter == hp.max_iters {
            break;
        }

        // E = (1/N) Y X^T - (rho/Nh) Yhat Xhat^T on the stacked data;
        // F is the same combination of the code Gram matrices.
        let mut e = y_aug.mul_bt(&x);
        e.scale(1.0 / n as f64);
        let mut f = x.gram_rows();
        f.scale(1.0 / n as f64);
        if nh > 0 && rho_eff > 0.0 {
            let s = -rho_eff / nh as f64;
            e.add_scaled(s, &yhat_aug.mul_bt(&x_hat));
            f.add_scaled(s, &x_hat.gram_rows());
        }
        let lambda_min_f = eig_extremes(&f)?.0;
        let (updated, dict_sweep_objectives) = dict_update_traced(&e, &f, &joint)?;
        let mut next = updated;
        reseed_and_normalize(&mut next, &ybar_aug, &mut rng);
        iterations.push(IterationTrace {
            rho_bound,
            rho_eff,
            lambda_min_f,
            objective,
            dict_sweep_objectives,
        });

        let mut delta = next.clone();
        delta.add_scaled(-1.0, &joint);
        let rel = delta.frob_norm() / joint.frob_norm().max(1e-30);
        joint = next;
        iter += 1;
        if rel < hp.tol {
            converged = true;
            stop = true; // one more pass to score the converged iterate
        }
    }

    let (final_objective, best_joint, best_iteration) = best.expect("loop scored at least once");
    let initial_objective = if best_iteration == 0 {
        final_objective
    } else {
        iterations[0].objective
    };

    let model = extract_model(&best_joint, d, sqrt_beta, &ts.y, &mut rng)?;
    Ok(TrainOutcome {
        model,
        trace: TrainTrace {
            sparsity,
            objective_rho: objective_rho.unwrap_or(0.0),
            initial_objective,
            final_objective,
            best_iteration,
            converged,
            iterations,
        },
    })
}

/// `(1/N) sum in-class residuals - (rho/Nh) sum complement residuals`
/// from the per-column squared coding errors of the stacked system.
fn split_objective(errs: &[f64], n: usize, rho: f64) -> f64 {
    let in_class: f64 = errs[..n].iter().sum();
    let nh = errs.len() - n;
    let mut obj = in_class / n as f64;
    if nh > 0 && rho > 0.0 {
        let complement: f64 = errs[n..].iter().sum();
        obj -= rho / nh as f64 * complement;
    }
    obj
}

/// Unit-normalizes joint columns, replacing collapsed ones by random
/// training columns (stacked columns always carry a label block, so the
/// drawn replacement has positive norm).
fn reseed_and_normalize(joint: &mut Mat, data: &Mat, rng: &mut ChaCha8Rng) {
    for j in 0..joint.cols() {
        let mut nrm = joint.col_norm(j);
        if nrm < 1e-10 {
            let pick = rng.gen_range(0..data.cols());
            joint.set_col(j, &data.col_to_vec(pick));
            nrm = joint.col_norm(j);
            if nrm < 1e-10 {
                let mut e = vec![0.0; joint.rows()];
                e[j % joint.rows()] = 1.0;
                joint.set_col(j, &e);
                continue;
            }
        }
        joint.scale_col(j, 1.0 / nrm);
    }
}

/// Splits the joint iterate back into a unit-atom dictionary and a
/// classifier rescaled by each atom's feature norm, so inference codes
/// against unit atoms. Atoms whose feature block collapsed are re-seeded
/// from in-class features and detached from the classifier.
fn extract_model(
    joint: &Mat,
    d: usize,
    sqrt_beta: f64,
    y: &Mat,
    rng: &mut ChaCha8Rng,
) -> Result<ClassModel> {
    let k = joint.cols();
    let d_raw = joint.row_block(0, d);
    let w_raw = joint.row_block(d, d + CLASS_COUNT);
    let mut dict = Mat::zeros(d, k);
    let mut classifier = Mat::zeros(CLASS_COUNT, k);
    for j in 0..k {
        let c = d_raw.col_norm(j);
        if c < ATOM_COLLAPSE_TOL {
            let pick = rng.gen_range(0..y.cols());
            let mut v = y.col_to_vec(pick);
            let nrm = crate::mat::norm(&v);
            if nrm < 1e-12 {
                v = vec![0.0; d];
                v[j % d] = 1.0;
            } else {
                for x in v.iter_mut() {
                    *x /= nrm;
                }
            }
            dict.set_col(j, &v);
            continue; // classifier column stays zero
        }
        for r in 0..d {
            *dict.at_mut(r, j) = d_raw.at(r, j) / c;
        }
        for r in 0..CLASS_COUNT {
            *classifier.at_mut(r, j) = w_raw.at(r, j) / (sqrt_beta * c);
        }
    }
    crate::mat::require_finite(&dict, "learned dictionary")?;
    crate::mat::require_finite(&classifier, "learned classifier")?;
    Ok(ClassModel { dict, classifier })
}
