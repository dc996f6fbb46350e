//! Command-line front end: train, segment, estimate, phantom, bench.
//!
//! Stacks live on disk as one directory per stack holding
//! `image_###.pgm` slices with optional `labels_###.pgm` and
//! `mask_###.pgm` siblings. Models are single binary files. Exit codes:
//! 0 success, 1 internal numerical failure, 2 bad input, 3 malformed
//! file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use flis::bench::{dice_csv, dice_row, flis_mean_dice, run_benchmark};
use flis::config::{MaskSource, RunConfig};
use flis::error::{FlisError, Result};
use flis::evaluation::{mem_ddls, mem_flis, mem_src, ops_ddls, ops_flis};
use flis::imaging::{Stack, TissueClass, CLASS_COUNT};
use flis::pipeline::{
    gather_pools, io, model_file, segment_stack, train_ddls_model, train_flis_model, Method,
};
use flis::synthdata::{generate, PhantomSpec};
use flis::train::TrainTrace;

#[derive(Parser)]
#[command(
    name = "flis",
    version,
    about = "Pixel-level CT brain segmentation by discriminative sparse dictionaries"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Configuration layering shared by the training-side subcommands.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Parameter file: `key=value` lines, `#` comments.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Inline override, e.g. `--set dict_size=40` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.params {
            cfg.apply_file(path)?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                FlisError::Config(format!("--set expects key=value, got '{kv}'"))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a segmentation model from labeled stacks.
    Train {
        /// Directory holding one subdirectory per training stack.
        #[arg(long)]
        data: PathBuf,
        /// Trainer: `flis` (discriminative) or `ddls` (merged baseline).
        #[arg(long, default_value = "flis")]
        method: String,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Segment stacks with a trained model.
    Segment {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Directory holding one subdirectory per stack.
        #[arg(long)]
        data: PathBuf,
        /// Output directory; predictions land in `<out>/<stack>/pred_###.pgm`.
        #[arg(long)]
        out: PathBuf,
        /// Score predictions against ground-truth labels.
        #[arg(long)]
        dice: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print operation-count and memory estimates for all methods.
    Estimate {
        /// Training pixels per class (N).
        #[arg(long, default_value_t = 4700.0)]
        train_pixels: f64,
        /// Atoms per class dictionary in the operation table (K).
        #[arg(long, default_value_t = 120.0)]
        train_atoms: f64,
        /// Atoms per class dictionary in the memory table (K).
        #[arg(long, default_value_t = 80.0)]
        mem_atoms: f64,
        /// Feature length (d), intensity and distance halves together.
        #[arg(long, default_value_t = 242.0)]
        feature_len: f64,
        /// Nonzeros per training code (L).
        #[arg(long, default_value_t = 5.0)]
        sparsity: f64,
        #[arg(long, default_value_t = 512.0)]
        width: f64,
        #[arg(long, default_value_t = 512.0)]
        height: f64,
        /// Training stacks held by the sparse-representation baseline.
        #[arg(long, default_value_t = 15.0)]
        stacks: f64,
    },
    /// Generate a synthetic phantom suite with ground truth.
    Phantom {
        /// Output directory; stacks land under `<out>/train` and `<out>/test`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 24)]
        slices: usize,
        #[arg(long, default_value_t = 15)]
        train_stacks: usize,
        #[arg(long, default_value_t = 5)]
        test_stacks: usize,
        #[arg(long, default_value_t = 0.025)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train and score every method on one train/test split.
    Bench {
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        /// Write per-stack dice rows to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Sweep one configuration key instead of running the full
        /// comparison (reports mean dice of the discriminative model per
        /// value). `train_stacks` sweeps the number of training stacks.
        #[arg(long, value_name = "KEY")]
        sweep: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        /// Methods to run (comma-separated). The sparse-representation
        /// baseline dominates runtime; drop `src` for quick comparisons.
        #[arg(long, value_delimiter = ',', default_value = "flis,ddls,src,intensity")]
        methods: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { data, method, out, config } => train(&data, &method, &out, &config),
        Command::Segment { model, data, out, dice, config } => {
            segment(&model, &data, &out, dice, &config)
        }
        Command::Estimate {
            train_pixels,
            train_atoms,
            mem_atoms,
            feature_len,
            sparsity,
            width,
            height,
            stacks,
        } => {
            estimate(train_pixels, train_atoms, mem_atoms, feature_len, sparsity, width, height, stacks);
            Ok(())
        }
        Command::Phantom { out, width, height, slices, train_stacks, test_stacks, noise, seed } => {
            phantom(&out, width, height, slices, train_stacks, test_stacks, noise, seed)
        }
        Command::Bench { train_data, test_data, csv, sweep, values, methods, config } => {
            bench(&train_data, &test_data, csv.as_deref(), sweep.as_deref(), &values, &methods, &config)
        }
    }
}

fn train(data: &Path, method: &str, out: &Path, config: &ConfigArgs) -> Result<()> {
    let cfg = config.build()?;
    let method = Method::parse(method).ok_or_else(|| {
        FlisError::InvalidArgument(format!("unknown method '{method}' (expected flis or ddls)"))
    })?;
    let stacks = io::read_stacks(data, true, cfg.mask_source == MaskSource::Provided)?;
    println!("loaded {} training stacks from {}", stacks.len(), data.display());

    let t0 = Instant::now();
    let pools = gather_pools(&stacks, &cfg)?;
    for (p, row) in pools.pools.iter().enumerate() {
        println!(
            "partition {p}: pooled {} brain / {} csf / {} subdural patches",
            row[0].cols(),
            row[1].cols(),
            row[2].cols()
        );
    }

    let model = match method {
        Method::Flis => {
            let (model, traces) = train_flis_model(&pools, &cfg)?;
            for (p, class_traces) in traces.iter().enumerate() {
                for (c, trace) in class_traces.iter().enumerate() {
                    print_trace(&format!("partition {p} {}", TissueClass::ALL[c].name()), trace);
                }
            }
            model
        }
        Method::Ddls => {
            let (model, traces) = train_ddls_model(&pools, &cfg)?;
            for (p, trace) in traces.iter().enumerate() {
                print_trace(&format!("partition {p} merged"), trace);
            }
            model
        }
    };
    println!("trained {} model in {:.1}s", method.name(), t0.elapsed().as_secs_f64());

    model_file::save(&model, out)?;
    let bytes = model_file::to_bytes(&model)?;
    println!(
        "wrote {} ({} bytes, checksum {:016x})",
        out.display(),
        bytes.len(),
        model_file::fnv1a64(&bytes)
    );
    Ok(())
}

fn print_trace(who: &str, trace: &TrainTrace) {
    println!(
        "{who}: L={}, {} iterations, objective {:.6} -> {:.6}{}",
        trace.sparsity,
        trace.iterations.len(),
        trace.initial_objective,
        trace.final_objective,
        if trace.converged { ", converged" } else { "" }
    );
}

fn segment(model: &Path, data: &Path, out: &Path, dice: bool, config: &ConfigArgs) -> Result<()> {
    let cfg = config.build()?;
    let model = model_file::load(model)?;
    let stacks = io::read_stacks(data, dice, cfg.mask_source == MaskSource::Provided)?;
    println!(
        "loaded {} model ({} partitions, {}x{} patches) and {} stacks",
        model.meta.method.name(),
        model.meta.partitions,
        model.meta.patch_width,
        model.meta.patch_width,
        stacks.len()
    );

    let mut rows: Vec<(String, [Option<f64>; CLASS_COUNT])> = Vec::new();
    for stack in &stacks {
        if stack.slices() < model.meta.partitions {
            eprintln!(
                "warning: stack {} has {} slices for {} partitions; slices spread across \
                 the partition range",
                stack.name,
                stack.slices(),
                model.meta.partitions
            );
        }
        let t0 = Instant::now();
        let pred = segment_stack(&model, stack, &cfg)?;
        let dir = out.join(&stack.name);
        std::fs::create_dir_all(&dir)
            .map_err(|e| FlisError::Io { path: dir.clone(), source: e })?;
        for (z, plane) in pred.iter().enumerate() {
            io::write_label_plane(&dir.join(format!("pred_{z:03}.pgm")), plane)?;
        }
        print!("{}: {} slices in {:.1}s", stack.name, pred.len(), t0.elapsed().as_secs_f64());
        if dice {
            let truth = stack.labels.as_deref().expect("labels were required above");
            let row = dice_row(&pred, truth)?;
            print!(
                " | dice brain {} csf {} subdural {}",
                fmt_opt(row[0]),
                fmt_opt(row[1]),
                fmt_opt(row[2])
            );
            rows.push((stack.name.clone(), row));
        }
        println!();
    }
    if dice && rows.len() > 1 {
        let mean = flis::bench::mean_rows(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        println!(
            "mean dice: brain {} csf {} subdural {}",
            fmt_opt(mean[0]),
            fmt_opt(mean[1]),
            fmt_opt(mean[2])
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "NA".into(),
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate(n: f64, k: f64, mem_k: f64, d: f64, l: f64, ix: f64, iy: f64, stacks: f64) {
    let d_half = (d / 2.0).ceil();
    println!(
        "operation counts (N={n} training pixels per class, K={k} atoms, d={d}, L={l}, image {ix}x{iy})"
    );
    println!("ops_flis = {:.6e}", ops_flis(n, k, d, l, ix, iy));
    println!("ops_ddls = {:.6e}", ops_ddls(n, k, d, l));
    println!("memory footprints (K={mem_k} atoms, d={d}, image {ix}x{iy}, stacks={stacks})");
    println!("mem_flis_joint = {:.6e}", mem_flis(d, mem_k));
    println!("mem_flis_intensity = {:.6e}", mem_flis(d_half, mem_k));
    println!("mem_ddls = {:.6e}", mem_ddls(d, mem_k, ix, iy));
    println!("mem_src = {:.6e}", mem_src(d, stacks, ix, iy));
    println!(
        "note: sizing conventions differ in whether the distance half of the feature is \
         counted for the per-class dictionaries; mem_flis_joint uses the full feature \
         length d, mem_flis_intensity only its intensity half (ceil(d/2)). Both are \
         printed so either convention can be checked."
    );
}

#[allow(clippy::too_many_arguments)]
fn phantom(
    out: &Path,
    width: usize,
    height: usize,
    slices: usize,
    train_stacks: usize,
    test_stacks: usize,
    noise: f64,
    seed: u64,
) -> Result<()> {
    let spec = PhantomSpec {
        width,
        height,
        slices,
        train_stacks,
        test_stacks,
        noise_sigma: noise,
        seed,
    };
    let suite = generate(&spec)?;
    for stack in &suite.train {
        io::write_stack(&out.join("train"), stack)?;
    }
    for stack in &suite.test {
        io::write_stack(&out.join("test"), stack)?;
    }
    println!(
        "wrote {} train / {} test stacks of {} slices ({}x{}) under {}",
        suite.train.len(),
        suite.test.len(),
        slices,
        width,
        height,
        out.display()
    );
    Ok(())
}

fn bench(
    train_data: &Path,
    test_data: &Path,
    csv: Option<&Path>,
    sweep: Option<&str>,
    values: &[usize],
    methods: &[String],
    config: &ConfigArgs,
) -> Result<()> {
    let cfg = config.build()?;
    let need_masks = cfg.mask_source == MaskSource::Provided;
    let train: Vec<Stack> = io::read_stacks(train_data, true, need_masks)?;
    let test: Vec<Stack> = io::read_stacks(test_data, true, need_masks)?;
    println!("{} training stacks, {} test stacks", train.len(), test.len());

    if let Some(key) = sweep {
        if values.is_empty() {
            return Err(FlisError::InvalidArgument(
                "--sweep needs --values v1,v2,...".into(),
            ));
        }
        for &v in values {
            let mut c = cfg.clone();
            let used_train: &[Stack] = if key == "train_stacks" {
                if v == 0 || v > train.len() {
                    return Err(FlisError::InvalidArgument(format!(
                        "train_stacks sweep value {v} outside 1..={}",
                        train.len()
                    )));
                }
                &train[..v]
            } else {
                c.set(key, &v.to_string())?;
                c.validate()?;
                &train
            };
            let t0 = Instant::now();
            let mean = flis_mean_dice(used_train, &test, &c)?;
            println!(
                "{key}={v}: dice brain {} csf {} subdural {} ({:.1}s)",
                fmt_opt(mean[0]),
                fmt_opt(mean[1]),
                fmt_opt(mean[2]),
                t0.elapsed().as_secs_f64()
            );
        }
        return Ok(());
    }

    let selection: Vec<&str> = methods.iter().map(String::as_str).collect();
    let report = run_benchmark(&train, &test, &cfg, &selection)?;
    println!("patch pooling took {:.1}s", report.pool_secs);
    for m in &report.methods {
        let fmt_ms = |class: TissueClass| match m.mean_sd(class) {
            Some((mean, sd)) => format!("{mean:.4}±{sd:.4}"),
            None => "NA".into(),
        };
        println!(
            "{:<9} train {:>7.1}s segment {:>7.1}s | dice brain {} csf {} subdural {}",
            m.name,
            m.train_secs,
            m.segment_secs,
            fmt_ms(TissueClass::Brain),
            fmt_ms(TissueClass::Csf),
            fmt_ms(TissueClass::Subdural)
        );
    }
    if let Some(path) = csv {
        let names: Vec<String> = test.iter().map(|s| s.name.clone()).collect();
        let text = dice_csv(&report.methods, &names);
        std::fs::write(path, text)
            .map_err(|e| FlisError::Io { path: path.to_path_buf(), source: e })?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
