//! Run configuration: one flat set of `key=value` settings shared by
//! training, segmentation and benchmarking.
//!
//! Values come from defaults, then an optional parameter file, then
//! command-line overrides — each layer assigns through [`RunConfig::set`]
//! so the same names and parsing rules apply everywhere. Unknown keys
//! are rejected by name rather than ignored.

use std::fs;
use std::path::Path;

use crate::error::{FlisError, Result};
use crate::train::FlisHyperParams;

/// Where segmentation gets its per-slice head masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    /// Masks are read alongside the images and must exist.
    Provided,
    /// Masks are thresholded out of the images.
    Computed,
}

impl MaskSource {
    pub fn name(self) -> &'static str {
        match self {
            MaskSource::Provided => "provided",
            MaskSource::Computed => "computed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "provided" => Some(MaskSource::Provided),
            "computed" => Some(MaskSource::Computed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Master seed; every random choice derives from it.
    pub seed: u64,
    /// Square patch side (odd).
    pub patch_width: usize,
    /// Axial partitions per stack.
    pub partitions: usize,
    /// Atoms per class dictionary.
    pub dict_size: usize,
    pub rho: f64,
    pub beta: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Cap on pooled training samples per (partition, class).
    pub samples_per_class: usize,
    /// Patch quota per (slice, class) during pooling.
    pub slice_quota: usize,
    /// Boundary-distance strata used when drawing patches.
    pub distance_bins: usize,
    /// Atoms per class in the sparse-representation baseline.
    pub src_atoms_per_class: usize,
    pub mask_source: MaskSource,
    /// Majority-smooth predicted labels inside the mask.
    pub median_filter: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            patch_width: 11,
            partitions: 4,
            dict_size: 40,
            rho: 0.5,
            beta: 2.0,
            lambda: 0.1,
            lambda1: 0.01,
            max_iters: 30,
            tol: 1e-4,
            samples_per_class: 3000,
            slice_quota: 60,
            distance_bins: 8,
            src_atoms_per_class: 100,
            mask_source: MaskSource::Provided,
            median_filter: false,
        }
    }
}

impl RunConfig {
    /// The training weights this configuration selects.
    pub fn hyperparams(&self) -> FlisHyperParams {
        FlisHyperParams {
            dict_size: self.dict_size,
            rho: self.rho,
            beta: self.beta,
            lambda: self.lambda,
            lambda1: self.lambda1,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(FlisError::Config(what));
        if self.patch_width % 2 == 0 || self.patch_width < 3 {
            return bad(format!("patch_width {} must be odd and at least 3", self.patch_width));
        }
        if self.partitions == 0 {
            return bad("partitions must be at least 1".into());
        }
        self.hyperparams().validate().map_err(|e| FlisError::Config(e.to_string()))?;
        if self.samples_per_class < self.dict_size {
            return bad(format!(
                "samples_per_class {} cannot seed a {}-atom dictionary",
                self.samples_per_class, self.dict_size
            ));
        }
        if self.slice_quota == 0 {
            return bad("slice_quota must be at least 1".into());
        }
        if self.distance_bins == 0 {
            return bad("distance_bins must be at least 1".into());
        }
        if self.src_atoms_per_class == 0 {
            return bad("src_atoms_per_class must be at least 1".into());
        }
        Ok(())
    }

    /// Assigns one setting from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                FlisError::Config(format!("key '{key}': cannot parse value '{value}'"))
            })
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "patch_width" => self.patch_width = num(key, value)?,
            "partitions" => self.partitions = num(key, value)?,
            "dict_size" => self.dict_size = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "lambda1" => self.lambda1 = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "samples_per_class" => self.samples_per_class = num(key, value)?,
            "slice_quota" => self.slice_quota = num(key, value)?,
            "distance_bins" => self.distance_bins = num(key, value)?,
            "src_atoms_per_class" => self.src_atoms_per_class = num(key, value)?,
            "mask_source" => {
                self.mask_source = MaskSource::parse(value).ok_or_else(|| {
                    FlisError::Config(format!(
                        "key 'mask_source': expected 'provided' or 'computed', got '{value}'"
                    ))
                })?;
            }
            "median_filter" => self.median_filter = num(key, value)?,
            _ => {
                return Err(FlisError::Config(format!("unknown configuration key '{key}'")));
            }
        }
        Ok(())
    }

    /// Applies a parameter file: `key=value` per line, `#` comments,
    /// blank lines ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| FlisError::io(path, e))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                FlisError::Config(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}
