//! Slice-level types and geometry: candidate head region, distance
//! transform, patch features, and axial partitioning.

mod distance;
mod features;
mod region;

pub use distance::{distance_transform, DistanceMap};
pub use features::{extract_feature, select_patches, PatchFeature};
pub use region::candidate_region;

use crate::error::{FlisError, Result};

/// Number of tissue classes (brain, CSF, subdural).
pub const CLASS_COUNT: usize = 3;

/// The three tissue classes a candidate-region pixel can take.
/// Label maps additionally use `0` for background outside the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TissueClass {
    Brain,
    Csf,
    Subdural,
}

impl TissueClass {
    pub const ALL: [TissueClass; CLASS_COUNT] =
        [TissueClass::Brain, TissueClass::Csf, TissueClass::Subdural];

    /// Zero-based index into per-class arrays.
    pub fn index(self) -> usize {
        match self {
            TissueClass::Brain => 0,
            TissueClass::Csf => 1,
            TissueClass::Subdural => 2,
        }
    }

    /// Pixel value in label maps (background is 0).
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_label(v: u8) -> Option<TissueClass> {
        match v {
            1 => Some(TissueClass::Brain),
            2 => Some(TissueClass::Csf),
            3 => Some(TissueClass::Subdural),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TissueClass::Brain => "brain",
            TissueClass::Csf => "csf",
            TissueClass::Subdural => "subdural",
        }
    }
}

/// One grayscale slice with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Slice {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer does not match shape");
        Slice { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Per-pixel class labels: `0` background, `1..=3` tissue classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSlice {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelSlice {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(FlisError::InvalidArgument(
                "label buffer does not match shape".into(),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&v| v > 3) {
            return Err(FlisError::InvalidArgument(format!(
                "label value {bad} outside 0..=3"
            )));
        }
        Ok(LabelSlice { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Candidate mask implied by the labels (any nonzero pixel).
    pub fn to_region(&self) -> CandidateRegion {
        CandidateRegion {
            width: self.width,
            height: self.height,
            mask: self.labels.iter().map(|&v| v > 0).collect(),
        }
    }
}

/// Binary head mask on one slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateRegion {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl CandidateRegion {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), width * height, "mask buffer does not match shape");
        CandidateRegion { width, height, mask }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        CandidateRegion { width, height, mask: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// One CT stack: images top to bottom, with optional ground-truth labels
/// and head masks (both per slice when present).
#[derive(Debug, Clone)]
pub struct Stack {
    pub name: String,
    pub images: Vec<Slice>,
    pub labels: Option<Vec<LabelSlice>>,
    pub masks: Option<Vec<CandidateRegion>>,
}

impl Stack {
    pub fn slices(&self) -> usize {
        self.images.len()
    }

    pub fn width(&self) -> usize {
        self.images.first().map_or(0, |s| s.width())
    }

    pub fn height(&self) -> usize {
        self.images.first().map_or(0, |s| s.height())
    }

    /// Checks that every per-slice vector has one entry per image and
    /// that all planes share the image dimensions.
    pub fn validate(&self) -> Result<()> {
        let err = |what: String| Err(FlisError::InvalidArgument(what));
        if self.images.is_empty() {
            return err(format!("stack {} has no slices", self.name));
        }
        let (w, h) = (self.width(), self.height());
        for (z, img) in self.images.iter().enumerate() {
            if img.width() != w || img.height() != h {
                return err(format!("stack {} slice {z} is {}x{}, expected {w}x{h}",
                    self.name, img.width(), img.height()));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.images.len() {
                return err(format!("stack {} has {} label planes for {} slices",
                    self.name, labels.len(), self.images.len()));
            }
            for (z, l) in labels.iter().enumerate() {
                if l.width() != w || l.height() != h {
                    return err(format!("stack {} label plane {z} is {}x{}, expected {w}x{h}",
                        self.name, l.width(), l.height()));
                }
            }
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.images.len() {
                return err(format!("stack {} has {} mask planes for {} slices",
                    self.name, masks.len(), self.images.len()));
            }
            for (z, m) in masks.iter().enumerate() {
                if m.width() != w || m.height() != h {
                    return err(format!("stack {} mask plane {z} is {}x{}, expected {w}x{h}",
                        self.name, m.width(), m.height()));
                }
            }
        }
        Ok(())
    }
}

/// Maps slice index `t` of a `total`-slice stack to one of `partitions`
/// axial partitions: `floor(t * partitions / total)`.
///
/// Every partition is hit by at least one slice whenever
/// `partitions <= total`.
pub fn partition_index(t: usize, total: usize, partitions: usize) -> Result<usize> {
    if partitions == 0 || total == 0 {
        return Err(FlisError::InvalidArgument(
            "partition_index: empty stack or zero partitions".into(),
        ));
    }
    if partitions > total {
        return Err(FlisError::InvalidArgument(format!(
            "partition_index: {partitions} partitions exceed {total} slices"
        )));
    }
    if t >= total {
        return Err(FlisError::InvalidArgument(format!(
            "partition_index: slice {t} outside stack of {total}"
        )));
    }
    Ok((t as u64 * partitions as u64 / total as u64) as usize)
}
