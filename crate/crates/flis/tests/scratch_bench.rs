//! Throwaway solver microbenchmark (not part of the suite).

use std::time::Instant;

use flis::mat::Mat;
use flis::numerics::GramLasso;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn profile_real_slice() {
    use flis::config::RunConfig;
    use flis::infer::PartitionClassifier;
    use flis::pipeline::{
        self, distance_maps, feature_matrix, masked_coords, model_file, stack_regions,
    };
    use std::path::Path;

    let model = model_file::load(Path::new("/tmp/flis_full/flis.model")).unwrap();
    let stack = flis::pipeline::io::read_stack_dir(
        Path::new("/tmp/flis_full/data/test/test_00"),
        false,
        true,
    )
    .unwrap();
    let cfg = RunConfig::default();
    let regions = stack_regions(&stack, cfg.mask_source).unwrap();
    let (dts, scale) = distance_maps(&stack.name, &regions).unwrap();
    let pmap = pipeline::partition_map(stack.slices(), model.meta.partitions);
    let z = 12usize;
    let clf =
        PartitionClassifier::new(&model.partitions[pmap[z]], model.meta.hp.lambda).unwrap();
    let w = model.meta.patch_width;

    let t0 = Instant::now();
    let coords = masked_coords(&regions[z]);
    let feats = feature_matrix(&stack.images[z], &dts[z], scale, w, &coords).unwrap();
    let t_feat = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let labels = clf.classify_scan(&feats).unwrap();
    let t_scan = t1.elapsed().as_secs_f64();

    println!(
        "slice {z}: {} px | features {t_feat:.3}s | classify_scan {t_scan:.3}s ({:.1} us/px) | {} nonbrain",
        coords.len(),
        1e6 * t_scan / coords.len() as f64,
        labels.iter().filter(|c| c.label() != 1).count()
    );
}

#[test]
#[ignore]
fn time_warm_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (d, k) = (242usize, 120usize);
    let mut dict = Mat::from_fn(d, k, |_, _| rng.gen_range(-1.0f64..1.0));
    for c in 0..k {
        let n = dict.col_norm(c);
        dict.scale_col(c, 1.0 / n);
    }
    let solver = GramLasso::new(&dict, 0.1).unwrap();

    // Slowly drifting feature vector, nonnegative like real patches.
    let mut f: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0f64..1.0)).collect();
    let n_solves = 3000usize;
    let mut qs: Vec<Vec<f64>> = Vec::with_capacity(n_solves);
    for _ in 0..n_solves {
        for v in f.iter_mut() {
            *v = (*v + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
        }
        let mut q = vec![0.0f64; k];
        for r in 0..d {
            let row = dict.row(r);
            for (j, qj) in q.iter_mut().enumerate() {
                *qj += row[j] * f[r];
            }
        }
        qs.push(q);
    }

    let t0 = Instant::now();
    let mut warm = vec![0.0f64; k];
    let mut total_nnz = 0usize;
    for q in &qs {
        warm = solver.solve_correlations_warm(q, &warm);
        total_nnz += warm.iter().filter(|v| **v > 0.0).count();
    }
    let secs = t0.elapsed().as_secs_f64();
    println!(
        "{n_solves} warm solves in {secs:.3}s ({:.1} us/solve), mean support {:.1}",
        1e6 * secs / n_solves as f64,
        total_nnz as f64 / n_solves as f64
    );
}
