//! End-to-end pipeline: pool labeled patches per axial partition, fit
//! the per-partition models, persist them, and scan new stacks.
//!
//! A stack of `T` slices is cut into `P` axial partitions
//! (`floor(t P / T)`); each partition trains its own dictionaries from
//! patches pooled across that partition's slices of every training
//! stack. Segmentation routes each slice to its partition's model and
//! classifies every pixel inside the head mask; pixels outside stay
//! background.

pub mod io;
pub mod model_file;

use rayon::prelude::*;

use crate::baselines;
use crate::config::{MaskSource, RunConfig};
use crate::error::{FlisError, Result};
use crate::imaging::{
    candidate_region, distance_transform, extract_feature, partition_index, select_patches,
    CandidateRegion, DistanceMap, LabelSlice, Slice, Stack, TissueClass, CLASS_COUNT,
};
use crate::infer::PartitionClassifier;
use crate::mat::Mat;
use crate::seeding;
use crate::train::{
    self, ClassTrainingSet, FlisHyperParams, PartitionModel, TrainTrace,
};

/// Seed-derivation tags, so pooling and training draws never collide.
const POOL_TAG: u64 = 0x706f_6f6c;
const TRAIN_TAG: u64 = 0x7472_6169;
const DDLS_TAG: u64 = 0x6464_6c73;

/// Which trainer produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Discriminative per-class dictionaries with complement repulsion.
    Flis,
    /// One merged label-consistent dictionary per partition.
    Ddls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Flis => "flis",
            Method::Ddls => "ddls",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "flis" => Some(Method::Flis),
            "ddls" => Some(Method::Ddls),
            _ => None,
        }
    }
}

/// Everything about a model that is not matrix data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub method: Method,
    pub patch_width: usize,
    pub partitions: usize,
    pub hp: FlisHyperParams,
    pub seed: u64,
}

/// A trained segmentation model: one dictionary/classifier pair per
/// axial partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub meta: ModelMeta,
    pub partitions: Vec<PartitionModel>,
}

impl Model {
    pub fn feature_len(&self) -> usize {
        2 * self.meta.patch_width * self.meta.patch_width
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(FlisError::InvalidArgument(format!("model: {what}")));
        if self.meta.patch_width % 2 == 0 || self.meta.patch_width == 0 {
            return bad(format!("patch_width {} is not odd", self.meta.patch_width));
        }
        self.meta.hp.validate()?;
        if self.partitions.len() != self.meta.partitions || self.partitions.is_empty() {
            return bad(format!(
                "{} partition models for {} partitions",
                self.partitions.len(),
                self.meta.partitions
            ));
        }
        let atoms = CLASS_COUNT * self.meta.hp.dict_size;
        for (p, pm) in self.partitions.iter().enumerate() {
            if pm.dict.rows() != self.feature_len() || pm.dict.cols() != atoms {
                return bad(format!(
                    "partition {p} dictionary is {}x{}, expected {}x{atoms}",
                    pm.dict.rows(),
                    pm.dict.cols(),
                    self.feature_len()
                ));
            }
            if pm.classifier.rows() != CLASS_COUNT || pm.classifier.cols() != atoms {
                return bad(format!(
                    "partition {p} classifier is {}x{}, expected {CLASS_COUNT}x{atoms}",
                    pm.classifier.rows(),
                    pm.classifier.cols()
                ));
            }
            crate::mat::require_finite(&pm.dict, "model dictionary")?;
            crate::mat::require_finite(&pm.classifier, "model classifier")?;
        }
        Ok(())
    }
}

/// Pooled training features: `pools[partition][class]` is a
/// `feature_len x n` matrix of patch columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPools {
    pub feature_len: usize,
    pub pools: Vec<Vec<Mat>>,
}

/// Head masks for one stack, per the configured source.
pub fn stack_regions(stack: &Stack, source: MaskSource) -> Result<Vec<CandidateRegion>> {
    match source {
        MaskSource::Provided => stack.masks.clone().ok_or_else(|| {
            FlisError::InvalidArgument(format!(
                "stack {} has no masks (mask_source=provided; use 'computed' to threshold \
                 them out of the images)",
                stack.name
            ))
        }),
        MaskSource::Computed => Ok(stack.images.iter().map(candidate_region).collect()),
    }
}

/// Boundary-distance maps for every slice plus the stack's normalizer
/// (one over the largest distance, so scaled distances live in [0, 1]).
pub fn distance_maps(name: &str, regions: &[CandidateRegion]) -> Result<(Vec<DistanceMap>, f64)> {
    let maps: Vec<DistanceMap> = regions.iter().map(distance_transform).collect();
    let max = maps.iter().map(DistanceMap::max).fold(0.0f64, f64::max);
    if !max.is_finite() {
        return Err(FlisError::InvalidArgument(format!(
            "stack {name}: a candidate region touches no background, boundary distances \
             are undefined"
        )));
    }
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    Ok((maps, scale))
}

/// Pools labeled patches from every training stack into per-partition,
/// per-class feature matrices.
///
/// Patches are drawn per slice with a quota, stratified over boundary
/// distance, and capped at `samples_per_class` per pool; all draws
/// derive from the configured seed. A class that ends up with no
/// samples anywhere in a partition is an error — its dictionary would
/// be unlearnable.
pub fn gather_pools(stacks: &[Stack], cfg: &RunConfig) -> Result<TrainingPools> {
    cfg.validate()?;
    if stacks.is_empty() {
        return Err(FlisError::InvalidArgument("no training stacks".into()));
    }
    let d = 2 * cfg.patch_width * cfg.patch_width;
    let cap = cfg.samples_per_class;
    let mut feats: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); CLASS_COUNT]; cfg.partitions];
    let mut counts = vec![[0usize; CLASS_COUNT]; cfg.partitions];
    for (s_idx, stack) in stacks.iter().enumerate() {
        stack.validate()?;
        let labels = stack.labels.as_ref().ok_or_else(|| {
            FlisError::InvalidArgument(format!(
                "stack {} has no ground-truth labels to train from",
                stack.name
            ))
        })?;
        let regions = stack_regions(stack, cfg.mask_source)?;
        let (dts, scale) = distance_maps(&stack.name, &regions)?;
        let total = stack.slices();
        for z in 0..total {
            let p = partition_index(z, total, cfg.partitions)?;
            for &class in TissueClass::ALL.iter() {
                let c = class.index();
                if counts[p][c] >= cap {
                    continue;
                }
                let seed = seeding::derive(&[
                    cfg.seed,
                    POOL_TAG,
                    s_idx as u64,
                    z as u64,
                    c as u64,
                ]);
                let picked = select_patches(
                    &stack.images[z],
                    &labels[z],
                    &regions[z],
                    &dts[z],
                    class,
                    cfg.slice_quota,
                    cfg.distance_bins,
                    cfg.patch_width,
                    scale,
                    seed,
                )?;
                for f in picked.into_iter().take(cap - counts[p][c]) {
                    feats[p][c].extend_from_slice(&f.vector);
                    counts[p][c] += 1;
                }
            }
        }
    }

    let mut pools = Vec::with_capacity(cfg.partitions);
    for (p, (by_class, n_by_class)) in feats.into_iter().zip(counts).enumerate() {
        let mut row = Vec::with_capacity(CLASS_COUNT);
        for (c, (cols, n)) in by_class.into_iter().zip(n_by_class).enumerate() {
            if n == 0 {
                return Err(FlisError::DegenerateClass {
                    partition: p,
                    class: TissueClass::ALL[c].name().to_string(),
                });
            }
            // Columns were appended contiguously; transpose into row-major.
            let mut data = vec![0.0f64; d * n];
            for (j, col) in cols.chunks_exact(d).enumerate() {
                for (r, &v) in col.iter().enumerate() {
                    data[r * n + j] = v;
                }
            }
            row.push(Mat::from_vec(d, n, data));
        }
        pools.push(row);
    }
    Ok(TrainingPools { feature_len: d, pools })
}

/// Truncation count that balances the three class pools of a partition.
fn balanced_count(p: usize, classes: &[Mat], dict_size: usize) -> Result<usize> {
    let n = classes.iter().map(Mat::cols).min().unwrap_or(0);
    if n < dict_size {
        return Err(FlisError::InvalidArgument(format!(
            "partition {p}: balanced class pools hold {n} samples, fewer than the \
             {dict_size} dictionary atoms"
        )));
    }
    Ok(n)
}

/// Trains the discriminative model: per partition, each class learns its
/// own dictionary against the other two classes' (equally sized) pools.
///
/// Returns the model plus the `traces[partition][class]` convergence
/// records.
pub fn train_flis_model(
    pools: &TrainingPools,
    cfg: &RunConfig,
) -> Result<(Model, Vec<Vec<TrainTrace>>)> {
    cfg.validate()?;
    let hp = cfg.hyperparams();
    let mut parts = Vec::with_capacity(pools.pools.len());
    let mut traces = Vec::with_capacity(pools.pools.len());
    for (p, classes) in pools.pools.iter().enumerate() {
        let n = balanced_count(p, classes, hp.dict_size)?;
        let mut class_models = Vec::with_capacity(CLASS_COUNT);
        let mut class_traces = Vec::with_capacity(CLASS_COUNT);
        for &class in TissueClass::ALL.iter() {
            let c = class.index();
            let y = classes[c].col_block(0, n);
            let rest: Vec<usize> = (0..CLASS_COUNT).filter(|&o| o != c).collect();
            let y_hat =
                classes[rest[0]].col_block(0, n).hstack(&classes[rest[1]].col_block(0, n));
            let ts = ClassTrainingSet::per_class(class, y, y_hat)?;
            let seed = seeding::derive(&[cfg.seed, TRAIN_TAG, p as u64, c as u64]);
            let outcome = train::train_class(&ts, &hp, seed)?;
            class_models.push(outcome.model);
            class_traces.push(outcome.trace);
        }
        parts.push(train::assemble_partition_model(&class_models)?);
        traces.push(class_traces);
    }
    let model = Model {
        meta: ModelMeta {
            method: Method::Flis,
            patch_width: cfg.patch_width,
            partitions: cfg.partitions,
            hp,
            seed: cfg.seed,
        },
        partitions: parts,
    };
    model.validate()?;
    Ok((model, traces))
}

/// Trains the merged-dictionary baseline on the same balanced pools: one
/// label-consistent dictionary of `3 dict_size` atoms per partition, no
/// complement repulsion.
pub fn train_ddls_model(
    pools: &TrainingPools,
    cfg: &RunConfig,
) -> Result<(Model, Vec<TrainTrace>)> {
    cfg.validate()?;
    let hp = cfg.hyperparams();
    let mut parts = Vec::with_capacity(pools.pools.len());
    let mut traces = Vec::with_capacity(pools.pools.len());
    for (p, classes) in pools.pools.iter().enumerate() {
        let n = balanced_count(p, classes, hp.dict_size)?;
        let truncated: Vec<Mat> = classes.iter().map(|m| m.col_block(0, n)).collect();
        let seed = seeding::derive(&[cfg.seed, DDLS_TAG, p as u64]);
        let outcome = baselines::train_ddls(&truncated, &hp, seed)?;
        parts.push(PartitionModel {
            dict: outcome.model.dict,
            classifier: outcome.model.classifier,
        });
        traces.push(outcome.trace);
    }
    let model = Model {
        meta: ModelMeta {
            method: Method::Ddls,
            patch_width: cfg.patch_width,
            partitions: cfg.partitions,
            // Recorded as trained: the merged baseline has no repulsion.
            hp: FlisHyperParams { rho: 0.0, ..hp },
            seed: cfg.seed,
        },
        partitions: parts,
    };
    model.validate()?;
    Ok((model, traces))
}

/// Maps each slice of a `total`-slice stack to a partition. Stacks with
/// at least as many slices as partitions reproduce the training map;
/// shorter stacks spread their slices across the full partition range.
pub fn partition_map(total: usize, partitions: usize) -> Vec<usize> {
    (0..total).map(|z| (z as u64 * partitions as u64 / total as u64) as usize).collect()
}

/// Feature matrix of the listed pixels, one column per coordinate.
pub fn feature_matrix(
    img: &Slice,
    dt: &DistanceMap,
    scale: f64,
    w: usize,
    coords: &[(usize, usize)],
) -> Result<Mat> {
    let d = 2 * w * w;
    let n = coords.len();
    let mut data = vec![0.0f64; d * n];
    for (j, &(x, y)) in coords.iter().enumerate() {
        let f = extract_feature(img, dt, x, y, w, scale)?;
        for (r, &v) in f.vector.iter().enumerate() {
            data[r * n + j] = v;
        }
    }
    Ok(Mat::from_vec(d, n, data))
}

/// In-mask pixel coordinates in scan order.
pub fn masked_coords(region: &CandidateRegion) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for y in 0..region.height() {
        for x in 0..region.width() {
            if region.at(x, y) {
                coords.push((x, y));
            }
        }
    }
    coords
}

/// Segments every slice of `stack` with `model`. Pixels outside the head
/// mask stay background (label 0).
pub fn segment_stack(model: &Model, stack: &Stack, cfg: &RunConfig) -> Result<Vec<LabelSlice>> {
    model.validate()?;
    stack.validate()?;
    let regions = stack_regions(stack, cfg.mask_source)?;
    let (dts, scale) = distance_maps(&stack.name, &regions)?;
    let pmap = partition_map(stack.slices(), model.meta.partitions);

    let mut classifiers: Vec<Option<PartitionClassifier>> =
        (0..model.meta.partitions).map(|_| None).collect();
    for &p in &pmap {
        if classifiers[p].is_none() {
            classifiers[p] =
                Some(PartitionClassifier::new(&model.partitions[p], model.meta.hp.lambda)?);
        }
    }

    let w = model.meta.patch_width;
    (0..stack.slices())
        .into_par_iter()
        .map(|z| {
            let clf = classifiers[pmap[z]].as_ref().expect("classifier built for partition");
            segment_slice(&stack.images[z], &regions[z], &dts[z], scale, w, clf, cfg.median_filter)
        })
        .collect()
}

fn segment_slice(
    img: &Slice,
    region: &CandidateRegion,
    dt: &DistanceMap,
    scale: f64,
    w: usize,
    clf: &PartitionClassifier,
    smooth: bool,
) -> Result<LabelSlice> {
    let (width, height) = (img.width(), img.height());
    let coords = masked_coords(region);
    let mut plane = vec![0u8; width * height];
    if !coords.is_empty() {
        let feats = feature_matrix(img, dt, scale, w, &coords)?;
        let labels = clf.classify_scan(&feats)?;
        for (&(x, y), class) in coords.iter().zip(labels) {
            plane[y * width + x] = class.label();
        }
    }
    if smooth {
        majority_filter(&mut plane, region);
    }
    LabelSlice::new(width, height, plane)
}

/// One pass of 3x3 in-mask majority smoothing; ties keep the center
/// label, so the pass is idempotent on already-smooth regions.
pub fn majority_filter(plane: &mut [u8], region: &CandidateRegion) {
    let (w, h) = (region.width(), region.height());
    let src = plane.to_vec();
    for y in 0..h {
        for x in 0..w {
            if !region.at(x, y) {
                continue;
            }
            let mut counts = [0usize; 4];
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if region.at(nx, ny) {
                        counts[src[ny * w + nx] as usize] += 1;
                    }
                }
            }
            let mut best = src[y * w + x] as usize;
            for (v, &count) in counts.iter().enumerate() {
                if count > counts[best] {
                    best = v;
                }
            }
            plane[y * w + x] = best as u8;
        }
    }
}
