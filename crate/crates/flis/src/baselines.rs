//! Baseline segmenters the discriminative model is compared against.
//!
//! * [`train_ddls`] — joint label-consistent dictionary learning: one
//!   dictionary over the merged classes, no complement repulsion. It is
//!   by construction the same optimization as per-class training with
//!   the repulsion weight at zero, run once on the merged set.
//! * [`SrcModel`] — classification by sparse representation over a pool
//!   of raw training patches; the class collecting the most coefficient
//!   mass wins.
//! * [`IntensityModel`] — per-class Gaussian fit of scalar intensity,
//!   maximum-likelihood assignment. The floor every learned method has
//!   to clear.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FlisError, Result};
use crate::imaging::{TissueClass, CLASS_COUNT};
use crate::mat::Mat;
use crate::numerics::GramLasso;
use crate::train::{train_class, ClassTrainingSet, FlisHyperParams, TrainOutcome};

/// Coefficient mass below which a sparse-representation vote is treated
/// as undecidable (the pixel stays background).
pub const SRC_UNDECIDABLE_TOL: f64 = 1e-12;

/// Joint label-consistent training on the merged class pools (class
/// order brain, CSF, subdural). Uses `hp.dict_size` atoms per class, so
/// the merged dictionary matches the per-class models' total size.
pub fn train_ddls(pools: &[Mat], hp: &FlisHyperParams, seed: u64) -> Result<TrainOutcome> {
    let (y, h) = merge_pools(pools)?;
    let ts = ClassTrainingSet::joint(y, h)?;
    let joint_hp = FlisHyperParams {
        rho: 0.0,
        dict_size: hp.dict_size * CLASS_COUNT,
        ..hp.clone()
    };
    train_class(&ts, &joint_hp, seed)
}

/// Concatenates the three class pools and builds the matching one-hot
/// label matrix.
pub fn merge_pools(pools: &[Mat]) -> Result<(Mat, Mat)> {
    if pools.len() != CLASS_COUNT {
        return Err(FlisError::InvalidArgument(format!(
            "expected {} class pools, got {}",
            CLASS_COUNT,
            pools.len()
        )));
    }
    let d = pools[0].rows();
    for (i, p) in pools.iter().enumerate() {
        if p.rows() != d {
            return Err(FlisError::InvalidArgument(format!(
                "class pool {i} has {} feature rows, expected {d}",
                p.rows()
            )));
        }
        if p.cols() == 0 {
            return Err(FlisError::InvalidArgument(format!("class pool {i} is empty")));
        }
    }
    let y = pools[1..].iter().fold(pools[0].clone(), |acc, p| acc.hstack(p));
    let mut h = Mat::zeros(CLASS_COUNT, y.cols());
    let mut offset = 0;
    for (class, p) in pools.iter().enumerate() {
        for c in 0..p.cols() {
            *h.at_mut(class, offset + c) = 1.0;
        }
        offset += p.cols();
    }
    Ok((y, h))
}

/// Pool of labeled unit-norm training patches for sparse-representation
/// classification.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcModel {
    pub dict: Mat,
    pub labels: Vec<TissueClass>,
}

impl SrcModel {
    /// Normalizes the pooled columns and pairs them with their labels.
    /// Zero columns are rejected: a silent all-zero atom would soak up
    /// no mass but still dilute its class.
    pub fn new(dict: Mat, labels: Vec<TissueClass>) -> Result<Self> {
        if dict.cols() != labels.len() {
            return Err(FlisError::InvalidArgument(format!(
                "{} atoms but {} labels",
                dict.cols(),
                labels.len()
            )));
        }
        if dict.cols() == 0 {
            return Err(FlisError::InvalidArgument("patch pool is empty".into()));
        }
        crate::mat::require_finite(&dict, "patch pool")?;
        let mut dict = dict;
        for j in 0..dict.cols() {
            let nrm = dict.col_norm(j);
            if nrm < 1e-12 {
                return Err(FlisError::InvalidArgument(format!("patch pool column {j} is zero")));
            }
            dict.scale_col(j, 1.0 / nrm);
        }
        Ok(Self { dict, labels })
    }

    /// Subsamples up to `per_class` columns from each class pool
    /// (deterministically for a fixed seed) and pools them in class
    /// order.
    pub fn from_pools(pools: &[Mat], per_class: usize, seed: u64) -> Result<Self> {
        if pools.len() != CLASS_COUNT {
            return Err(FlisError::InvalidArgument(format!(
                "expected {} class pools, got {}",
                CLASS_COUNT,
                pools.len()
            )));
        }
        if per_class == 0 {
            return Err(FlisError::InvalidArgument("per_class must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = pools[0].rows();
        let mut cols: Vec<f64> = Vec::new();
        let mut labels = Vec::new();
        let mut count = 0usize;
        for (class, p) in pools.iter().enumerate() {
            if p.rows() != d {
                return Err(FlisError::InvalidArgument(format!(
                    "class pool {class} has {} feature rows, expected {d}",
                    p.rows()
                )));
            }
            let take = per_class.min(p.cols());
            let mut picks = rand::seq::index::sample(&mut rng, p.cols(), take).into_vec();
            picks.sort_unstable();
            for c in picks {
                cols.extend(p.col_to_vec(c));
                labels.push(TissueClass::ALL[class]);
                count += 1;
            }
        }
        let mut dict = Mat::zeros(d, count);
        for (j, chunk) in cols.chunks(d).enumerate() {
            dict.set_col(j, chunk);
        }
        Self::new(dict, labels)
    }
}

/// Sparse-representation classifier sharing one Gram factorization
/// across pixels.
pub struct SrcClassifier<'a> {
    model: &'a SrcModel,
    solver: GramLasso,
}

impl<'a> SrcClassifier<'a> {
    pub fn new(model: &'a SrcModel, lambda: f64) -> Result<Self> {
        let solver = GramLasso::new(&model.dict, lambda)?;
        Ok(Self { model, solver })
    }

    /// Per-class share of the coefficient mass; `None` when the code is
    /// (numerically) empty and no class can be argued for.
    pub fn scores(&self, feature: &[f64]) -> Result<Option<[f64; CLASS_COUNT]>> {
        let dict = &self.model.dict;
        if feature.len() != dict.rows() {
            return Err(FlisError::InvalidArgument(format!(
                "feature length {} does not match patch length {}",
                feature.len(),
                dict.rows()
            )));
        }
        let mut q = vec![0.0f64; dict.cols()];
        for (r, &m) in feature.iter().enumerate() {
            if m != 0.0 {
                crate::mat::axpy(m, dict.row(r), &mut q);
            }
        }
        let alpha = self.solver.solve_correlations(&q);
        let total: f64 = alpha.iter().sum();
        if total <= SRC_UNDECIDABLE_TOL {
            return Ok(None);
        }
        let mut mass = [0.0f64; CLASS_COUNT];
        for (j, &a) in alpha.iter().enumerate() {
            mass[self.model.labels[j].index()] += a;
        }
        for m in mass.iter_mut() {
            *m /= total;
        }
        Ok(Some(mass))
    }

    /// `None` means undecidable: the caller leaves the pixel background.
    pub fn classify(&self, feature: &[f64]) -> Result<Option<TissueClass>> {
        Ok(self.scores(feature)?.map(|s| crate::infer::argmax_class(&s)))
    }

    /// Classifies columns in order with warm-started solves, like
    /// [`PartitionClassifier::classify_scan`](crate::infer::PartitionClassifier::classify_scan).
    pub fn classify_scan(&self, features: &Mat) -> Result<Vec<Option<TissueClass>>> {
        let dict = &self.model.dict;
        if features.rows() != dict.rows() {
            return Err(FlisError::InvalidArgument(format!(
                "features have {} rows, baseline dictionary expects {}",
                features.rows(),
                dict.rows()
            )));
        }
        crate::mat::require_finite(features, "baseline features")?;
        let qs = features.tr_mul(dict);
        let mut out = Vec::with_capacity(features.cols());
        let mut alpha = vec![0.0f64; dict.cols()];
        for j in 0..features.cols() {
            alpha = self.solver.solve_correlations_warm(qs.row(j), &alpha);
            let total: f64 = alpha.iter().sum();
            if total <= SRC_UNDECIDABLE_TOL {
                out.push(None);
                continue;
            }
            let mut mass = [0.0f64; CLASS_COUNT];
            for (a_idx, &a) in alpha.iter().enumerate() {
                mass[self.model.labels[a_idx].index()] += a / total;
            }
            out.push(Some(crate::infer::argmax_class(&mass)));
        }
        Ok(out)
    }
}

/// Per-class Gaussian fit of a scalar intensity; classification is
/// maximum likelihood with equal priors.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    pub mean: [f64; CLASS_COUNT],
    pub var: [f64; CLASS_COUNT],
}

impl IntensityModel {
    /// Fits means and variances from per-class intensity samples.
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.len() != CLASS_COUNT {
            return Err(FlisError::InvalidArgument(format!(
                "expected {} intensity sample sets, got {}",
                CLASS_COUNT,
                samples.len()
            )));
        }
        let mut mean = [0.0; CLASS_COUNT];
        let mut var = [0.0; CLASS_COUNT];
        for (j, s) in samples.iter().enumerate() {
            if s.is_empty() {
                return Err(FlisError::InvalidArgument(format!(
                    "no intensity samples for class {}",
                    TissueClass::ALL[j].name()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(FlisError::InvalidArgument("non-finite intensity sample".into()));
            }
            let n = s.len() as f64;
            let m = s.iter().sum::<f64>() / n;
            let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean[j] = m;
            var[j] = v.max(1e-12); // degenerate class stays usable
        }
        Ok(Self { mean, var })
    }

    /// Highest Gaussian log-likelihood wins, ties to the lowest class.
    pub fn classify(&self, intensity: f64) -> TissueClass {
        let mut scores = [0.0f64; CLASS_COUNT];
        for j in 0..CLASS_COUNT {
            let d = intensity - self.mean[j];
            scores[j] = -0.5 * (d * d / self.var[j] + self.var[j].ln());
        }
        crate::infer::argmax_class(&scores)
    }
}
