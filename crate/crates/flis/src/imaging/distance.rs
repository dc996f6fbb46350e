//! Exact Euclidean distance transform of the candidate region.
//!
//! Two-pass lower-envelope-of-parabolas algorithm on squared distances
//! (columns, then rows), which is exact and linear per scan line. The
//! distance of an in-region pixel is measured to the nearest pixel
//! outside the region; pixels outside the region are at distance zero.

use super::CandidateRegion;

/// Per-pixel Euclidean distance to the region exterior.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    dt: Vec<f64>,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.dt[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.dt
    }

    /// Largest distance on the map (0 for an empty region).
    pub fn max(&self) -> f64 {
        self.dt.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Computes the exact Euclidean distance transform of `region`.
///
/// A region covering the whole image has no exterior pixel; its
/// distances come back as `+inf`, which callers treat as a degenerate
/// input rather than a value to consume.
pub fn distance_transform(region: &CandidateRegion) -> DistanceMap {
    let (w, h) = (region.width(), region.height());
    let mut sq = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            sq[y * w + x] = if region.at(x, y) { f64::INFINITY } else { 0.0 };
        }
    }

    let mut line = vec![0.0f64; h.max(w)];
    let mut out_line = vec![0.0f64; h.max(w)];
    let mut sites: Vec<usize> = Vec::with_capacity(h.max(w));
    let mut bounds: Vec<f64> = Vec::with_capacity(h.max(w) + 1);

    // Pass 1: one-dimensional transform down each column.
    for x in 0..w {
        for y in 0..h {
            line[y] = sq[y * w + x];
        }
        envelope(&line[..h], &mut out_line[..h], &mut sites, &mut bounds);
        for y in 0..h {
            sq[y * w + x] = out_line[y];
        }
    }
    // Pass 2: along each row, combining with the squared column distances.
    for y in 0..h {
        line[..w].copy_from_slice(&sq[y * w..(y + 1) * w]);
        envelope(&line[..w], &mut out_line[..w], &mut sites, &mut bounds);
        for x in 0..w {
            sq[y * w + x] = out_line[x].sqrt();
        }
    }

    DistanceMap { width: w, height: h, dt: sq }
}

/// Lower envelope of the parabolas `f[q] + (x - q)^2`; sites with
/// infinite `f` contribute no parabola.
fn envelope(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    let n = f.len();
    sites.clear();
    bounds.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let fp = f[p] + (p * p) as f64;
                    let s = (fq - fp) / (2.0 * (q as f64 - p as f64));
                    if s <= *bounds.last().unwrap() {
                        sites.pop();
                        bounds.pop();
                    } else {
                        sites.push(q);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out[..n].fill(f64::INFINITY);
        return;
    }
    let mut k = 0usize;
    for (x, slot) in out.iter_mut().enumerate().take(n) {
        while k + 1 < sites.len() && bounds[k + 1] < x as f64 {
            k += 1;
        }
        let p = sites[k];
        let dx = x as f64 - p as f64;
        *slot = f[p] + dx * dx;
    }
}
