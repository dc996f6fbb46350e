//! Segmentation quality and the methods' cost accounting.
//!
//! [`dice_stack`] is the overlap metric every comparison reports. The
//! `ops_*`/`mem_*` functions are closed-form counts — training multiply
//! budget and model storage — that make the methods' asymmetry explicit:
//! the partition-shared dictionaries train once per stack position and
//! are amortized over every pixel, whereas a per-pixel dictionary scheme
//! pays its full cost at each of the `ix * iy` positions.

use crate::error::{FlisError, Result};
use crate::imaging::{LabelSlice, TissueClass};

/// Dice overlap of one class over a whole stack:
/// `2 |P and T| / (|P| + |T|)`, counted across all slices. When the
/// class is absent from both prediction and truth the metric is
/// undefined and reported as such rather than defaulting to a score.
pub fn dice_stack(pred: &[LabelSlice], truth: &[LabelSlice], class: TissueClass) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(FlisError::InvalidArgument(format!(
            "dice: {} predicted planes vs {} truth planes",
            pred.len(),
            truth.len()
        )));
    }
    let mut inter = 0u64;
    let mut pred_size = 0u64;
    let mut truth_size = 0u64;
    for (z, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.width() != t.width() || p.height() != t.height() {
            return Err(FlisError::InvalidArgument(format!(
                "dice: plane {z} is {}x{} predicted vs {}x{} truth",
                p.width(),
                p.height(),
                t.width(),
                t.height()
            )));
        }
        let want = class.label();
        for (a, b) in p.labels().iter().zip(t.labels()) {
            let pa = *a == want;
            let tb = *b == want;
            pred_size += pa as u64;
            truth_size += tb as u64;
            inter += (pa && tb) as u64;
        }
    }
    if pred_size + truth_size == 0 {
        return Err(FlisError::UndefinedMetric("dice"));
    }
    Ok(2.0 * inter as f64 / (pred_size + truth_size) as f64)
}

/// Training multiplies per output pixel for the partition-shared model:
/// `9 n k (2 (d + 3) + l^2) / (ix * iy)`. One model serves the whole
/// image, so the count is amortized over every pixel.
pub fn ops_flis(n: f64, k: f64, d: f64, l: f64, ix: f64, iy: f64) -> f64 {
    9.0 * n * k * (2.0 * (d + 3.0) + l * l) / (ix * iy)
}

/// Training multiplies for one per-pixel joint dictionary: same kernel
/// on intensity-only features (`d/2`), not amortized —
/// `9 n k (2 (d/2 + 3) + l^2)` at every pixel position.
pub fn ops_ddls(n: f64, k: f64, d: f64, l: f64) -> f64 {
    9.0 * n * k * (2.0 * (d / 2.0 + 3.0) + l * l)
}

/// Model bytes for the shared dictionaries and classifiers:
/// `(d + 3) * 3k * 16` (three class blocks of `k` atoms, each atom `d`
/// dictionary rows plus 3 classifier rows, 16 bytes per entry).
pub fn mem_flis(d: f64, k: f64) -> f64 {
    (d + 3.0) * 3.0 * k * 16.0
}

/// Model bytes for per-pixel joint dictionaries on intensity-only
/// features: `(d/2 + 3) * 3k * 16` replicated at `ix * iy` positions.
pub fn mem_ddls(d: f64, k: f64, ix: f64, iy: f64) -> f64 {
    (d / 2.0 + 3.0) * 3.0 * k * 16.0 * ix * iy
}

/// Patch-pool bytes for per-pixel sparse-representation classification:
/// `(d/2)^2 * stacks * 16` at each of the `ix * iy` positions — every
/// position keeps its own pool of `(d/2) * stacks` raw patches of
/// length `d/2`.
pub fn mem_src(d: f64, stacks: f64, ix: f64, iy: f64) -> f64 {
    let half = d / 2.0;
    half * half * stacks * ix * iy * 16.0
}
