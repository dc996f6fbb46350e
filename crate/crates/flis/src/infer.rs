//! Pixel classification against a learned partition model.
//!
//! A feature vector is sparse-coded against the partition's concatenated
//! dictionary by a nonnegative l1 solve, the atom classifier maps the
//! code to three class scores, and the highest score wins. Exact score
//! ties resolve to the lowest class index, so an all-zero code (a
//! feature no atom wants) lands on brain rather than flapping.

use rayon::prelude::*;

use crate::error::{FlisError, Result};
use crate::imaging::{TissueClass, CLASS_COUNT};
use crate::mat::Mat;
use crate::numerics::GramLasso;
use crate::train::PartitionModel;

/// Reusable per-partition classifier: the dictionary Gram matrix is
/// factored once and shared across all pixels of the partition.
pub struct PartitionClassifier<'a> {
    model: &'a PartitionModel,
    solver: GramLasso,
}

impl<'a> PartitionClassifier<'a> {
    pub fn new(model: &'a PartitionModel, lambda: f64) -> Result<Self> {
        if model.classifier.rows() != CLASS_COUNT || model.classifier.cols() != model.dict.cols() {
            return Err(FlisError::InvalidArgument(format!(
                "partition classifier is {}x{}, expected {}x{}",
                model.classifier.rows(),
                model.classifier.cols(),
                CLASS_COUNT,
                model.dict.cols()
            )));
        }
        let solver = GramLasso::new(&model.dict, lambda)?;
        Ok(Self { model, solver })
    }

    /// Class scores `W alpha` for one feature vector.
    pub fn scores(&self, feature: &[f64]) -> Result<[f64; CLASS_COUNT]> {
        let q = self.correlations(feature)?;
        Ok(self.scores_from_correlations(&q))
    }

    pub fn classify(&self, feature: &[f64]) -> Result<TissueClass> {
        Ok(argmax_class(&self.scores(feature)?))
    }

    /// Classifies every column of `features` in parallel.
    pub fn classify_batch(&self, features: &Mat) -> Result<Vec<TissueClass>> {
        if features.rows() != self.model.feature_len() {
            return Err(FlisError::InvalidArgument(format!(
                "features have {} rows, model expects {}",
                features.rows(),
                self.model.feature_len()
            )));
        }
        crate::mat::require_finite(features, "classification features")?;
        let qs = features.tr_mul(&self.model.dict); // row j = D^T m_j
        Ok((0..features.cols())
            .into_par_iter()
            .map(|j| argmax_class(&self.scores_from_correlations(qs.row(j))))
            .collect())
    }

    /// Classifies columns in order, warm-starting each sparse solve from
    /// the previous column's code. Converges to the same solutions as
    /// [`classify_batch`](Self::classify_batch) (the solve is convex);
    /// much cheaper when neighboring columns are similar, as adjacent
    /// pixels of a scan are.
    pub fn classify_scan(&self, features: &Mat) -> Result<Vec<TissueClass>> {
        if features.rows() != self.model.feature_len() {
            return Err(FlisError::InvalidArgument(format!(
                "features have {} rows, model expects {}",
                features.rows(),
                self.model.feature_len()
            )));
        }
        crate::mat::require_finite(features, "classification features")?;
        let qs = features.tr_mul(&self.model.dict);
        let w = &self.model.classifier;
        let mut out = Vec::with_capacity(features.cols());
        let mut alpha = vec![0.0f64; self.model.dict.cols()];
        for j in 0..features.cols() {
            alpha = self.solver.solve_correlations_warm(qs.row(j), &alpha);
            let mut scores = [0.0f64; CLASS_COUNT];
            for (a_idx, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    for (c, s) in scores.iter_mut().enumerate() {
                        *s += w.at(c, a_idx) * a;
                    }
                }
            }
            out.push(argmax_class(&scores));
        }
        Ok(out)
    }

    fn correlations(&self, feature: &[f64]) -> Result<Vec<f64>> {
        let dict = &self.model.dict;
        if feature.len() != dict.rows() {
            return Err(FlisError::InvalidArgument(format!(
                "feature length {} does not match model dimension {}",
                feature.len(),
                dict.rows()
            )));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(FlisError::InvalidArgument("feature has non-finite entries".into()));
        }
        let mut q = vec![0.0f64; dict.cols()];
        for (r, &m) in feature.iter().enumerate() {
            if m != 0.0 {
                crate::mat::axpy(m, dict.row(r), &mut q);
            }
        }
        Ok(q)
    }

    fn scores_from_correlations(&self, q: &[f64]) -> [f64; CLASS_COUNT] {
        let alpha = self.solver.solve_correlations(q);
        let w = &self.model.classifier;
        let mut scores = [0.0f64; CLASS_COUNT];
        for (j, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (c, s) in scores.iter_mut().enumerate() {
                    *s += w.at(c, j) * a;
                }
            }
        }
        scores
    }
}

/// Highest score wins; exact ties go to the lowest class index.
pub fn argmax_class(scores: &[f64; CLASS_COUNT]) -> TissueClass {
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    TissueClass::ALL[best]
}
