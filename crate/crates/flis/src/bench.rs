//! Benchmark harness: trains every method on the same pooled patches,
//! segments held-out stacks, and reports per-class dice with timings.
//!
//! Methods compared:
//!
//! - `flis`: discriminative per-class dictionaries (the main trainer);
//! - `ddls`: merged label-consistent dictionary, same atom budget;
//! - `src`: sparse-representation classification over raw intensity
//!   patches pooled across partitions — no distance channel, no learned
//!   dictionary, no classifier;
//! - `intensity`: per-class Gaussian on the center-pixel intensity.

use std::time::Instant;

use crate::baselines::{IntensityModel, SrcClassifier, SrcModel};
use crate::config::RunConfig;
use crate::error::{FlisError, Result};
use crate::evaluation::dice_stack;
use crate::imaging::{LabelSlice, Stack, TissueClass, CLASS_COUNT};
use crate::mat::Mat;
use crate::pipeline::{
    self, distance_maps, feature_matrix, gather_pools, masked_coords, segment_stack,
    stack_regions, train_ddls_model, train_flis_model, TrainingPools,
};
use crate::seeding;
use crate::train::TrainTrace;

const SRC_TAG: u64 = 0x7372_6364;

/// Every method the harness can run, in report order.
pub const METHODS: [&str; 4] = ["flis", "ddls", "src", "intensity"];

/// One method's held-out results.
#[derive(Debug, Clone)]
pub struct MethodReport {
    pub name: &'static str,
    /// `per_stack[i][class]`: dice on test stack `i`, `None` when the
    /// class is absent from both prediction and truth there.
    pub per_stack: Vec<[Option<f64>; CLASS_COUNT]>,
    pub train_secs: f64,
    pub segment_secs: f64,
}

impl MethodReport {
    /// Mean and standard deviation over the stacks where the class's
    /// dice is defined; `None` if it is defined nowhere.
    pub fn mean_sd(&self, class: TissueClass) -> Option<(f64, f64)> {
        let vals: Vec<f64> =
            self.per_stack.iter().filter_map(|row| row[class.index()]).collect();
        if vals.is_empty() {
            return None;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub pool_secs: f64,
    pub methods: Vec<MethodReport>,
    /// Alternation traces per (partition, class), filled when `flis` ran.
    pub flis_traces: Vec<Vec<TrainTrace>>,
    /// Alternation traces per partition, filled when `ddls` ran.
    pub ddls_traces: Vec<TrainTrace>,
}

impl BenchReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Wall-clock total: pooling plus every method's train and segment time.
    pub fn total_secs(&self) -> f64 {
        self.pool_secs
            + self.methods.iter().map(|m| m.train_secs + m.segment_secs).sum::<f64>()
    }
}

/// Per-class dice of one prediction against truth; absent-everywhere
/// classes report `None` instead of failing the run.
pub fn dice_row(
    pred: &[LabelSlice],
    truth: &[LabelSlice],
) -> Result<[Option<f64>; CLASS_COUNT]> {
    let mut row = [None; CLASS_COUNT];
    for &class in TissueClass::ALL.iter() {
        match dice_stack(pred, truth, class) {
            Ok(v) => row[class.index()] = Some(v),
            Err(FlisError::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(row)
}

fn truth_of(stack: &Stack) -> Result<&[LabelSlice]> {
    stack
        .labels
        .as_deref()
        .ok_or_else(|| {
            FlisError::InvalidArgument(format!(
                "test stack {} has no ground-truth labels to score against",
                stack.name
            ))
        })
}

/// Trains and scores the selected methods (see [`METHODS`]) on one
/// train/test split. Methods always run and report in [`METHODS`] order;
/// the sparse-representation baseline costs orders of magnitude more
/// segment time than the rest, so narrow selections keep runs tractable.
pub fn run_benchmark(
    train: &[Stack],
    test: &[Stack],
    cfg: &RunConfig,
    methods: &[&str],
) -> Result<BenchReport> {
    if test.is_empty() {
        return Err(FlisError::InvalidArgument("no test stacks".into()));
    }
    for name in methods {
        if !METHODS.contains(name) {
            return Err(FlisError::InvalidArgument(format!(
                "unknown benchmark method '{name}' (expected one of {})",
                METHODS.join(", ")
            )));
        }
    }
    let selected = |name: &str| methods.iter().any(|m| *m == name);

    let t0 = Instant::now();
    let pools = gather_pools(train, cfg)?;
    let pool_secs = t0.elapsed().as_secs_f64();
    let mut report = BenchReport {
        pool_secs,
        methods: Vec::with_capacity(methods.len()),
        flis_traces: Vec::new(),
        ddls_traces: Vec::new(),
    };

    for name in ["flis", "ddls"] {
        if !selected(name) {
            continue;
        }
        let t0 = Instant::now();
        let model = if name == "flis" {
            let (model, traces) = train_flis_model(&pools, cfg)?;
            report.flis_traces = traces;
            model
        } else {
            let (model, traces) = train_ddls_model(&pools, cfg)?;
            report.ddls_traces = traces;
            model
        };
        let train_secs = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let mut per_stack = Vec::with_capacity(test.len());
        for stack in test {
            let pred = segment_stack(&model, stack, cfg)?;
            per_stack.push(dice_row(&pred, truth_of(stack)?)?);
        }
        report.methods.push(MethodReport {
            name: if name == "flis" { "flis" } else { "ddls" },
            per_stack,
            train_secs,
            segment_secs: t0.elapsed().as_secs_f64(),
        });
    }

    if selected("src") {
        // Sparse-representation baseline on raw intensity patches.
        let t0 = Instant::now();
        let src = src_model_from_pools(&pools, cfg)?;
        let src_train = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let mut per_stack = Vec::with_capacity(test.len());
        for stack in test {
            let pred = segment_stack_src(&src, stack, cfg)?;
            per_stack.push(dice_row(&pred, truth_of(stack)?)?);
        }
        report.methods.push(MethodReport {
            name: "src",
            per_stack,
            train_secs: src_train,
            segment_secs: t0.elapsed().as_secs_f64(),
        });
    }

    if selected("intensity") {
        let t0 = Instant::now();
        let intensity = intensity_model_from_pools(&pools, cfg)?;
        let int_train = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let mut per_stack = Vec::with_capacity(test.len());
        for stack in test {
            let pred = segment_stack_intensity(&intensity, stack, cfg)?;
            per_stack.push(dice_row(&pred, truth_of(stack)?)?);
        }
        report.methods.push(MethodReport {
            name: "intensity",
            per_stack,
            train_secs: int_train,
            segment_secs: t0.elapsed().as_secs_f64(),
        });
    }

    Ok(report)
}

/// Builds the sparse-representation dictionary: per class, the pooled
/// patches of every partition merged, intensity half only, sampled down
/// to `src_atoms_per_class` columns.
pub fn src_model_from_pools(pools: &TrainingPools, cfg: &RunConfig) -> Result<SrcModel> {
    let w2 = cfg.patch_width * cfg.patch_width;
    let mut per_class: Vec<Mat> = Vec::with_capacity(CLASS_COUNT);
    for c in 0..CLASS_COUNT {
        let mut merged: Option<Mat> = None;
        for row in &pools.pools {
            let half = row[c].row_block(0, w2);
            merged = Some(match merged {
                Some(m) => m.hstack(&half),
                None => half,
            });
        }
        per_class.push(merged.expect("pools are never empty"));
    }
    SrcModel::from_pools(
        &per_class,
        cfg.src_atoms_per_class,
        seeding::derive(&[cfg.seed, SRC_TAG]),
    )
}

/// Segments with the sparse-representation baseline; undecidable pixels
/// (empty codes) stay background.
pub fn segment_stack_src(model: &SrcModel, stack: &Stack, cfg: &RunConfig) -> Result<Vec<LabelSlice>> {
    stack.validate()?;
    let w = cfg.patch_width;
    let w2 = w * w;
    if model.dict.rows() != w2 {
        return Err(FlisError::InvalidArgument(format!(
            "baseline dictionary has {}-pixel patches, configuration asks for {w2}",
            model.dict.rows()
        )));
    }
    let regions = stack_regions(stack, cfg.mask_source)?;
    let (dts, scale) = distance_maps(&stack.name, &regions)?;
    let clf = SrcClassifier::new(model, cfg.lambda)?;
    use rayon::prelude::*;
    (0..stack.slices())
        .into_par_iter()
        .map(|z| {
            let img = &stack.images[z];
            let coords = masked_coords(&regions[z]);
            let mut plane = vec![0u8; img.width() * img.height()];
            if !coords.is_empty() {
                let feats = feature_matrix(img, &dts[z], scale, w, &coords)?;
                let labels = clf.classify_scan(&feats.row_block(0, w2))?;
                for (&(x, y), label) in coords.iter().zip(labels) {
                    if let Some(class) = label {
                        plane[y * img.width() + x] = class.label();
                    }
                }
            }
            LabelSlice::new(img.width(), img.height(), plane)
        })
        .collect()
}

/// Fits the intensity baseline from the center pixel of every pooled
/// patch.
pub fn intensity_model_from_pools(pools: &TrainingPools, cfg: &RunConfig) -> Result<IntensityModel> {
    let center = (cfg.patch_width * cfg.patch_width - 1) / 2;
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); CLASS_COUNT];
    for row in &pools.pools {
        for (c, m) in row.iter().enumerate() {
            samples[c].extend_from_slice(m.row(center));
        }
    }
    IntensityModel::fit(&samples)
}

/// Segments by per-pixel intensity likelihood inside the mask.
pub fn segment_stack_intensity(
    model: &IntensityModel,
    stack: &Stack,
    cfg: &RunConfig,
) -> Result<Vec<LabelSlice>> {
    stack.validate()?;
    let regions = stack_regions(stack, cfg.mask_source)?;
    let mut planes = Vec::with_capacity(stack.slices());
    for (z, img) in stack.images.iter().enumerate() {
        let mut plane = vec![0u8; img.width() * img.height()];
        for y in 0..img.height() {
            for x in 0..img.width() {
                if regions[z].at(x, y) {
                    plane[y * img.width() + x] = model.classify(img.at(x, y)).label();
                }
            }
        }
        planes.push(LabelSlice::new(img.width(), img.height(), plane)?);
    }
    Ok(planes)
}

/// Mean per-class dice of the discriminative model over the test stacks
/// under one configuration — the unit step of hyperparameter sweeps.
pub fn flis_mean_dice(
    train: &[Stack],
    test: &[Stack],
    cfg: &RunConfig,
) -> Result<[Option<f64>; CLASS_COUNT]> {
    let pools = gather_pools(train, cfg)?;
    let (model, _) = train_flis_model(&pools, cfg)?;
    let mut rows = Vec::with_capacity(test.len());
    for stack in test {
        let pred = pipeline::segment_stack(&model, stack, cfg)?;
        rows.push(dice_row(&pred, truth_of(stack)?)?);
    }
    Ok(mean_rows(&rows))
}

/// Per-class mean over the defined entries of many dice rows.
pub fn mean_rows(rows: &[[Option<f64>; CLASS_COUNT]]) -> [Option<f64>; CLASS_COUNT] {
    let mut out = [None; CLASS_COUNT];
    for (c, slot) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r[c]).collect();
        if !vals.is_empty() {
            *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    out
}

/// `method,stack,brain,csf,subdural` rows; undefined dice prints `NA`.
pub fn dice_csv(reports: &[MethodReport], stack_names: &[String]) -> String {
    let mut out = String::from("method,stack,brain,csf,subdural\n");
    for report in reports {
        for (row, name) in report.per_stack.iter().zip(stack_names) {
            out.push_str(report.name);
            out.push(',');
            out.push_str(name);
            for v in row {
                out.push(',');
                match v {
                    Some(v) => out.push_str(&format!("{v:.6}")),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, PhantomSpec};

    fn tiny_setup() -> (Vec<Stack>, Vec<Stack>, RunConfig) {
        let spec = PhantomSpec {
            width: 64,
            height: 64,
            slices: 4,
            train_stacks: 1,
            test_stacks: 1,
            noise_sigma: 0.02,
            seed: 13,
        };
        let suite = generate(&spec).unwrap();
        let mut cfg = RunConfig::default();
        cfg.patch_width = 5;
        cfg.partitions = 2;
        cfg.dict_size = 6;
        cfg.samples_per_class = 60;
        cfg.slice_quota = 20;
        cfg.distance_bins = 4;
        cfg.max_iters = 2;
        cfg.src_atoms_per_class = 20;
        (suite.train, suite.test, cfg)
    }

    #[test]
    fn benchmark_reports_all_methods_with_defined_dice() {
        let (train, test, cfg) = tiny_setup();
        let report = run_benchmark(&train, &test, &cfg, &METHODS).unwrap();
        assert_eq!(report.methods.len(), 4);
        for m in &report.methods {
            assert_eq!(m.per_stack.len(), 1);
            for &class in TissueClass::ALL.iter() {
                let (mean, sd) = m.mean_sd(class).expect("phantom has every class");
                assert!((0.0..=1.0).contains(&mean), "{}: {mean}", m.name);
                assert!(sd >= 0.0);
            }
        }
        assert_eq!(report.flis_traces.len(), cfg.partitions);
        assert_eq!(report.ddls_traces.len(), cfg.partitions);
        assert!(report.total_secs() > 0.0);
        let csv = dice_csv(&report.methods, &["t0".into()]);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("flis,t0,"));
    }

    #[test]
    fn benchmark_selection_limits_the_work() {
        let (train, test, cfg) = tiny_setup();
        let report = run_benchmark(&train, &test, &cfg, &["intensity", "flis"]).unwrap();
        // Report order is fixed regardless of request order.
        let names: Vec<&str> = report.methods.iter().map(|m| m.name).collect();
        assert_eq!(names, ["flis", "intensity"]);
        assert!(!report.flis_traces.is_empty());
        assert!(report.ddls_traces.is_empty());
        assert!(run_benchmark(&train, &test, &cfg, &["bogus"]).is_err());
    }

    #[test]
    fn perfect_and_absent_classes_report_correctly() {
        // Truth with brain only; prediction identical: brain dice 1,
        // csf/subdural undefined.
        let plane = |v: u8| LabelSlice::new(4, 4, vec![v; 16]).unwrap();
        let truth = vec![plane(1)];
        let row = dice_row(&[plane(1)], &truth).unwrap();
        assert_eq!(row[0], Some(1.0));
        assert_eq!(row[1], None);
        assert_eq!(row[2], None);
        let rows = [row, dice_row(&[plane(2)], &truth).unwrap()];
        let mean = mean_rows(&rows);
        assert_eq!(mean[0], Some(0.5)); // 1.0 and 0.0
        assert_eq!(mean[1], Some(0.0)); // defined only on the second row
    }

    #[test]
    fn intensity_segmentation_labels_exactly_the_mask() {
        let (train, _test, cfg) = tiny_setup();
        let pools = gather_pools(&train, &cfg).unwrap();
        let model = intensity_model_from_pools(&pools, &cfg).unwrap();
        let stack = &train[0];
        let planes = segment_stack_intensity(&model, stack, &cfg).unwrap();
        let masks = stack.masks.as_ref().unwrap();
        for (z, plane) in planes.iter().enumerate() {
            for y in 0..plane.height() {
                for x in 0..plane.width() {
                    assert_eq!(plane.at(x, y) != 0, masks[z].at(x, y));
                }
            }
        }
        // Center row of a uniform patch is its intensity: the model's
        // class means should sit in distinct bands on the phantom.
        assert!(model.mean[0] > model.mean[1] && model.mean[0] > model.mean[2]);
    }

    #[test]
    fn src_dictionary_patch_length_is_checked() {
        let (train, test, cfg) = tiny_setup();
        let pools = gather_pools(&train, &cfg).unwrap();
        let src = src_model_from_pools(&pools, &cfg).unwrap();
        assert_eq!(src.dict.rows(), cfg.patch_width * cfg.patch_width);
        let mut wrong = cfg.clone();
        wrong.patch_width = 7;
        assert!(segment_stack_src(&src, &test[0], &wrong).is_err());
    }
}
