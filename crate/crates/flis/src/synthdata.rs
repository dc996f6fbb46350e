//! Synthetic CT-like head phantoms with ground truth.
//!
//! Each stack is an elliptical head tapering toward its ends, filled
//! with brain tissue, a pair of deep ventricles (CSF) and one
//! boundary-hugging subdural collection built directly from the head's
//! distance transform, so it is attached to the boundary and of bounded
//! thickness by construction. CSF and subdural intensity bands overlap
//! heavily on purpose: a thresholder has to confuse them, while the
//! distance channel separates deep fluid from peripheral fluid cleanly.
//!
//! All geometry and noise derive deterministically from the spec seed;
//! regenerating a suite is byte-identical.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlisError, Result};
use crate::imaging::{distance_transform, CandidateRegion, LabelSlice, Slice, Stack};
use crate::seeding;

const GEOMETRY_TAG: u64 = 0x6745;
const NOISE_TAG: u64 = 0x0f1e;

/// Shape of a generated suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub slices: usize,
    pub train_stacks: usize,
    pub test_stacks: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            slices: 24,
            train_stacks: 15,
            test_stacks: 5,
            noise_sigma: 0.025,
            seed: 7,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FlisError::InvalidArgument(format!("phantom spec: {what}")));
        if self.width < 48 || self.height < 48 {
            return bad("slices must be at least 48x48 to fit the head geometry");
        }
        if self.slices == 0 {
            return bad("stacks need at least one slice");
        }
        if self.train_stacks == 0 || self.test_stacks == 0 {
            return bad("need at least one training and one test stack");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PhantomSuite {
    pub train: Vec<Stack>,
    pub test: Vec<Stack>,
}

/// Per-stack anatomy, drawn once per stack in a fixed order.
struct StackGeometry {
    cx: f64,
    cy: f64,
    head_a: f64,
    head_b: f64,
    crescent_theta0: f64,
    crescent_span: f64,
    crescent_thickness: f64,
    vent_dx: f64,
    vent: [(f64, f64, f64); 2], // per side: dy, semi_a, semi_b
    brain_level: f64,
    csf_level: f64,
    subdural_level: f64,
    shade_dir: f64,
    shade_mag: f64,
}

impl StackGeometry {
    fn draw(spec: &PhantomSpec, stack_index: u64) -> Self {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeding::derive(&[spec.seed, GEOMETRY_TAG, stack_index]));
        let w = spec.width as f64;
        let h = spec.height as f64;
        let s = w.min(h);
        Self {
            cx: w * 0.5 + rng.gen_range(-0.02..0.02) * w,
            cy: h * 0.5 + rng.gen_range(-0.02..0.02) * h,
            head_a: w * rng.gen_range(0.30..0.36),
            head_b: h * rng.gen_range(0.33..0.40),
            crescent_theta0: rng.gen_range(0.0..2.0 * PI),
            crescent_span: rng.gen_range(1.3..2.1),
            crescent_thickness: (s * rng.gen_range(0.055..0.075)).clamp(4.0, 10.0),
            vent_dx: w * rng.gen_range(0.08..0.10),
            vent: [
                (
                    h * rng.gen_range(-0.02..0.02),
                    w * rng.gen_range(0.048..0.062),
                    h * rng.gen_range(0.075..0.105),
                ),
                (
                    h * rng.gen_range(-0.02..0.02),
                    w * rng.gen_range(0.048..0.062),
                    h * rng.gen_range(0.075..0.105),
                ),
            ],
            brain_level: 0.42 + rng.gen_range(-0.02..0.02),
            // Both fluids draw from one band: intensity alone cannot tell
            // them apart (their pooled means coincide), only position can.
            csf_level: 0.155 + rng.gen_range(-0.015..0.015),
            subdural_level: 0.155 + rng.gen_range(-0.015..0.015),
            shade_dir: rng.gen_range(0.0..2.0 * PI),
            shade_mag: rng.gen_range(0.0..0.03),
        }
    }
}

/// Generates the full suite; train and test stacks draw disjoint
/// geometry streams.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomSuite> {
    spec.validate()?;
    let make = |offset: usize, count: usize, prefix: &str| -> Result<Vec<Stack>> {
        (0..count)
            .map(|i| generate_stack(spec, (offset + i) as u64, format!("{prefix}_{i:02}")))
            .collect()
    };
    Ok(PhantomSuite {
        train: make(0, spec.train_stacks, "train")?,
        test: make(spec.train_stacks, spec.test_stacks, "test")?,
    })
}

fn generate_stack(spec: &PhantomSpec, stack_index: u64, name: String) -> Result<Stack> {
    let geo = StackGeometry::draw(spec, stack_index);
    let (w, h, t) = (spec.width, spec.height, spec.slices);
    let mut images = Vec::with_capacity(t);
    let mut labels = Vec::with_capacity(t);
    let mut masks = Vec::with_capacity(t);

    for z in 0..t {
        // Head cross-section shrinks toward the first and last slices.
        let u = (z as f64 + 0.5) / t as f64;
        let taper = 0.55 + 0.45 * (PI * u).sin().powf(0.8);
        let (a, b) = (geo.head_a * taper, geo.head_b * taper);

        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let nx = (x as f64 - geo.cx) / a;
                let ny = (y as f64 - geo.cy) / b;
                mask[y * w + x] = nx * nx + ny * ny <= 1.0;
            }
        }
        let region = CandidateRegion::new(w, h, mask);
        let dt = distance_transform(&region);

        let mut plane = vec![0u8; w * h];
        let deep = geo.crescent_thickness + 4.0; // keeps CSF clear of the rim
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if !region.at(x, y) {
                    continue;
                }
                plane[p] = 1; // brain by default

                let px = x as f64;
                let py = y as f64;
                if dt.at(x, y) > deep {
                    for (side, &(dy, va, vb)) in geo.vent.iter().enumerate() {
                        let sign = if side == 0 { -1.0 } else { 1.0 };
                        let vx = (px - (geo.cx + sign * geo.vent_dx * taper)) / (va * taper);
                        let vy = (py - (geo.cy + dy * taper)) / (vb * taper);
                        if vx * vx + vy * vy <= 1.0 {
                            plane[p] = 2; // CSF
                        }
                    }
                }

                // Crescent: angular window along the rim, thickness
                // tapering toward its tips, never thinner than 4 px.
                let theta = ((py - geo.cy) / b).atan2((px - geo.cx) / a);
                let arc = (theta - geo.crescent_theta0).rem_euclid(2.0 * PI);
                if arc <= geo.crescent_span {
                    let prof = (PI * arc / geo.crescent_span).sin().sqrt();
                    let thick = (geo.crescent_thickness * prof).max(4.0);
                    if dt.at(x, y) <= thick {
                        plane[p] = 3; // subdural wins over anything shallow
                    }
                }
            }
        }

        let mut pixels = vec![0.0f64; w * h];
        let noise_seed = seeding::derive(&[spec.seed, NOISE_TAG, stack_index, z as u64]);
        let mut noise = GaussianStream::new(noise_seed, spec.noise_sigma);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let base = match plane[p] {
                    0 => 0.02,
                    1 => geo.brain_level,
                    2 => geo.csf_level,
                    _ => geo.subdural_level,
                };
                let shade = if plane[p] == 0 {
                    0.0
                } else {
                    geo.shade_mag
                        * (geo.shade_dir.cos() * (x as f64 - geo.cx) / w as f64
                            + geo.shade_dir.sin() * (y as f64 - geo.cy) / h as f64)
                };
                pixels[p] = (base + shade + noise.next()).clamp(0.0, 1.0);
            }
        }

        images.push(Slice::new(w, h, pixels));
        labels.push(LabelSlice::new(w, h, plane)?);
        masks.push(region);
    }

    let stack = Stack { name, images, labels: Some(labels), masks: Some(masks) };
    stack.validate()?;
    Ok(stack)
}

/// Box-Muller pairs over a dedicated stream.
struct GaussianStream {
    rng: ChaCha8Rng,
    sigma: f64,
    spare: Option<f64>,
}

impl GaussianStream {
    fn new(seed: u64, sigma: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), sigma, spare: None }
    }

    fn next(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt() * self.sigma;
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}
