//! Patch features and training-patch selection.
//!
//! A feature for pixel `z` is the `w x w` intensity patch centered on `z`
//! followed by the matching patch of normalized boundary distances, both
//! in row-major patch order and zero-padded outside the image. Training
//! pixels are drawn per class, stratified over equal-width distance bins
//! so that samples cover the whole depth profile of the class instead of
//! bunching at its most common depth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CandidateRegion, DistanceMap, LabelSlice, Slice, TissueClass};
use crate::error::{FlisError, Result};

/// Feature vector of one pixel: `[intensity patch | distance patch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeature {
    pub center: (usize, usize),
    pub vector: Vec<f64>,
}

impl PatchFeature {
    /// Length of the intensity half (`w * w`).
    pub fn half_len(&self) -> usize {
        self.vector.len() / 2
    }

    /// The intensity-only prefix of the feature.
    pub fn intensity_half(&self) -> &[f64] {
        &self.vector[..self.half_len()]
    }
}

/// Extracts the feature of pixel `(x, y)`.
///
/// `w` must be odd; pixels outside the image contribute zeros to both
/// halves. Distances are multiplied by `dt_scale` (callers pass the
/// reciprocal of the stack's maximum distance, or 1 to keep raw pixels).
pub fn extract_feature(
    slice: &Slice,
    distances: &DistanceMap,
    x: usize,
    y: usize,
    w: usize,
    dt_scale: f64,
) -> Result<PatchFeature> {
    if w % 2 == 0 || w == 0 {
        return Err(FlisError::InvalidArgument(format!(
            "patch width must be odd, got {w}"
        )));
    }
    if x >= slice.width() || y >= slice.height() {
        return Err(FlisError::InvalidArgument(format!(
            "patch center ({x},{y}) outside {}x{} slice",
            slice.width(),
            slice.height()
        )));
    }
    if distances.width() != slice.width() || distances.height() != slice.height() {
        return Err(FlisError::InvalidArgument(
            "distance map shape does not match slice".into(),
        ));
    }
    let half = (w / 2) as i64;
    let mut vector = vec![0.0f64; 2 * w * w];
    let mut i = 0;
    for dy in -half..=half {
        for dx in -half..=half {
            let (px, py) = (x as i64 + dx, y as i64 + dy);
            if px >= 0 && py >= 0 && (px as usize) < slice.width() && (py as usize) < slice.height()
            {
                let (px, py) = (px as usize, py as usize);
                vector[i] = slice.at(px, py);
                vector[w * w + i] = distances.at(px, py) * dt_scale;
            }
            i += 1;
        }
    }
    Ok(PatchFeature { center: (x, y), vector })
}

/// Selects up to `quota` class-`class` training pixels on one slice and
/// extracts their features.
///
/// Candidates are pixels whose label matches `class` and which lie inside
/// the candidate region. Their boundary distances are split into `bins`
/// equal-width bins; the quota is spread as evenly as the bins'
/// populations allow (each bin contributes `ceil(quota/bins)` or
/// `floor(quota/bins)` samples when it has them, and shortfall is made up
/// round-robin from the remaining bins). Selection within a bin is a
/// seeded shuffle, so the result is deterministic for a given seed.
#[allow(clippy::too_many_arguments)]
pub fn select_patches(
    slice: &Slice,
    labels: &LabelSlice,
    region: &CandidateRegion,
    distances: &DistanceMap,
    class: TissueClass,
    quota: usize,
    bins: usize,
    w: usize,
    dt_scale: f64,
    seed: u64,
) -> Result<Vec<PatchFeature>> {
    if bins == 0 {
        return Err(FlisError::InvalidArgument("bins must be positive".into()));
    }
    if labels.width() != slice.width() || labels.height() != slice.height() {
        return Err(FlisError::InvalidArgument(
            "label map shape does not match slice".into(),
        ));
    }
    let wanted = class.label();
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for y in 0..slice.height() {
        for x in 0..slice.width() {
            if labels.at(x, y) == wanted && region.at(x, y) {
                candidates.push((x, y, distances.at(x, y)));
            }
        }
    }
    if candidates.is_empty() || quota == 0 {
        return Ok(Vec::new());
    }

    let dmin = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let dmax = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let span = dmax - dmin;
    let mut binned: Vec<Vec<(usize, usize)>> = vec![Vec::new(); bins];
    for (x, y, d) in candidates {
        let b = if span <= 0.0 {
            0
        } else {
            (((d - dmin) / span * bins as f64) as usize).min(bins - 1)
        };
        binned[b].push((x, y));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bin in binned.iter_mut() {
        bin.shuffle(&mut rng);
    }

    let available: usize = binned.iter().map(Vec::len).sum();
    let goal = quota.min(available);
    // Even split: the first (quota % bins) bins take the ceiling share.
    let base = quota / bins;
    let mut take: Vec<usize> = (0..bins)
        .map(|b| {
            let share = base + usize::from(b < quota % bins);
            share.min(binned[b].len())
        })
        .collect();
    let mut total: usize = take.iter().sum();
    while total < goal {
        let mut progressed = false;
        for b in 0..bins {
            if total >= goal {
                break;
            }
            if take[b] < binned[b].len() {
                take[b] += 1;
                total += 1;
                progressed = true;
            }
        }
        debug_assert!(progressed, "shortfall loop must progress");
        if !progressed {
            break;
        }
    }

    let mut out = Vec::with_capacity(goal);
    for (bin, &n) in binned.iter().zip(&take) {
        for &(x, y) in bin.iter().take(n) {
            out.push(extract_feature(slice, distances, x, y, w, dt_scale)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::distance_transform;

    fn flat_slice(w: usize, h: usize, v: f64) -> Slice {
        Slice::new(w, h, vec![v; w * h])
    }

    #[test]
    fn feature_layout_is_intensity_then_distance() {
        let mut px = vec![0.0f64; 25];
        px[12] = 0.5; // center of a 5x5 slice
        let slice = Slice::new(5, 5, px);
        let mut mask = vec![false; 25];
        mask[12] = true;
        let region = CandidateRegion::new(5, 5, mask);
        let dm = distance_transform(&region);
        let f = extract_feature(&slice, &dm, 2, 2, 3, 1.0).unwrap();
        assert_eq!(f.vector.len(), 18);
        assert_eq!(f.vector[4], 0.5); // patch center, intensity half
        assert_eq!(f.vector[9 + 4], 1.0); // patch center, distance half
        assert_eq!(f.intensity_half().len(), 9);
    }

    #[test]
    fn out_of_image_pixels_are_zero_padded() {
        let slice = flat_slice(4, 4, 1.0);
        let dm = distance_transform(&CandidateRegion::empty(4, 4));
        let f = extract_feature(&slice, &dm, 0, 0, 3, 1.0).unwrap();
        // Top-left corner: first row and column of the patch fall outside.
        assert_eq!(f.vector[0], 0.0);
        assert_eq!(f.vector[1], 0.0);
        assert_eq!(f.vector[3], 0.0);
        assert_eq!(f.vector[4], 1.0);
    }

    #[test]
    fn even_patch_width_is_rejected() {
        let slice = flat_slice(4, 4, 0.0);
        let dm = distance_transform(&CandidateRegion::empty(4, 4));
        assert!(extract_feature(&slice, &dm, 1, 1, 4, 1.0).is_err());
        assert!(extract_feature(&slice, &dm, 9, 1, 3, 1.0).is_err());
    }

    /// Translating the image content and the center together leaves the
    /// feature unchanged while the patch stays in bounds.
    #[test]
    fn features_are_translation_consistent() {
        let w = 12;
        let pattern = |x: usize, y: usize| ((x * 7 + y * 13) % 9) as f64 / 9.0;
        let s1 = Slice::new(w, w, (0..w * w).map(|p| pattern(p % w, p / w)).collect());
        let s2 = Slice::new(
            w,
            w,
            (0..w * w)
                .map(|p| {
                    let (x, y) = (p % w, p / w);
                    if x >= 2 && y >= 3 {
                        pattern(x - 2, y - 3)
                    } else {
                        0.9
                    }
                })
                .collect(),
        );
        let empty = distance_transform(&CandidateRegion::empty(w, w));
        let f1 = extract_feature(&s1, &empty, 4, 4, 5, 1.0).unwrap();
        let f2 = extract_feature(&s2, &empty, 6, 7, 5, 1.0).unwrap();
        assert_eq!(f1.vector, f2.vector);
    }

    fn ring_setup() -> (Slice, LabelSlice, CandidateRegion, DistanceMap) {
        // 21x21 disk with a subdural-labeled ring spanning depths 1..=9.
        let n = 21;
        let mut mask = vec![false; n * n];
        let mut labels = vec![0u8; n * n];
        for y in 0..n {
            for x in 0..n {
                let d2 = (x as f64 - 10.0).powi(2) + (y as f64 - 10.0).powi(2);
                if d2 <= 81.0 {
                    mask[y * n + x] = true;
                }
            }
        }
        let region = CandidateRegion::new(n, n, mask.clone());
        let dm = distance_transform(&region);
        for y in 0..n {
            for x in 0..n {
                if mask[y * n + x] {
                    labels[y * n + x] = TissueClass::Subdural.label();
                }
            }
        }
        let labels = LabelSlice::new(n, n, labels).unwrap();
        (flat_slice(n, n, 0.4), labels, region, dm)
    }

    #[test]
    fn every_distance_bin_contributes_samples() {
        let (slice, labels, region, dm) = ring_setup();
        let picked = select_patches(
            &slice,
            &labels,
            &region,
            &dm,
            TissueClass::Subdural,
            20,
            5,
            3,
            1.0,
            99,
        )
        .unwrap();
        assert_eq!(picked.len(), 20);
        // Bin the picked centers by distance again: every bin of the depth
        // profile must appear at least twice for quota 20 over 5 bins.
        let dists: Vec<f64> = picked.iter().map(|p| dm.at(p.center.0, p.center.1)).collect();
        let dmin = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let dmax = dists.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = [0usize; 5];
        for p in &picked {
            let d = dm.at(p.center.0, p.center.1);
            let b = (((d - dmin) / (dmax - dmin) * 5.0) as usize).min(4);
            counts[b] += 1;
        }
        for (b, &c) in counts.iter().enumerate() {
            assert!(c >= 2, "bin {b} contributed {c} samples");
        }
    }

    #[test]
    fn selection_is_deterministic_and_quota_capped() {
        let (slice, labels, region, dm) = ring_setup();
        let a = select_patches(&slice, &labels, &region, &dm, TissueClass::Subdural, 40, 8, 3, 1.0, 5)
            .unwrap();
        let b = select_patches(&slice, &labels, &region, &dm, TissueClass::Subdural, 40, 8, 3, 1.0, 5)
            .unwrap();
        assert_eq!(a, b);
        let c = select_patches(&slice, &labels, &region, &dm, TissueClass::Subdural, 40, 8, 3, 1.0, 6)
            .unwrap();
        assert_ne!(a.iter().map(|p| p.center).collect::<Vec<_>>(),
                   c.iter().map(|p| p.center).collect::<Vec<_>>());

        // Quota above availability returns everything, exactly once.
        let all = select_patches(
            &slice, &labels, &region, &dm, TissueClass::Subdural, 10_000, 8, 3, 1.0, 5,
        )
        .unwrap();
        let mut centers: Vec<_> = all.iter().map(|p| p.center).collect();
        let total = centers.len();
        centers.sort_unstable();
        centers.dedup();
        assert_eq!(centers.len(), total);
        assert_eq!(total, region.count());
    }

    #[test]
    fn absent_class_yields_no_patches() {
        let (slice, labels, region, dm) = ring_setup();
        let picked =
            select_patches(&slice, &labels, &region, &dm, TissueClass::Csf, 20, 5, 3, 1.0, 1)
                .unwrap();
        assert!(picked.is_empty());
    }
}
