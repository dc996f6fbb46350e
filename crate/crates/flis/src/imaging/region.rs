//! Candidate head region from raw intensities.
//!
//! CT stacks do not always ship a head mask, so segmentation can fall
//! back to computing one: Otsu threshold, keep the largest 8-connected
//! component, close small boundary gaps (3x3 structuring element, two
//! iterations), then fill interior holes. Clean inputs pass through
//! unchanged; an all-background slice yields an empty mask.

use super::{CandidateRegion, Slice};

pub fn candidate_region(slice: &Slice) -> CandidateRegion {
    let (w, h) = (slice.width(), slice.height());
    let threshold = match otsu_threshold(slice) {
        Some(t) => t,
        None => return CandidateRegion::empty(w, h),
    };
    let mut mask: Vec<bool> = slice
        .pixels()
        .iter()
        .map(|&v| bin_of(v) > threshold)
        .collect();
    if !mask.iter().any(|&m| m) {
        return CandidateRegion::empty(w, h);
    }
    largest_component(&mut mask, w, h);
    let mask = closing(&mask, w, h, 2);
    let mask = fill_holes(&mask, w, h);
    CandidateRegion::new(w, h, mask)
}

#[inline]
fn bin_of(v: f64) -> usize {
    ((v.clamp(0.0, 1.0)) * 255.0).round() as usize
}

/// Otsu's threshold over a 256-bin histogram; `None` when the slice is
/// constant (no meaningful split exists). Foreground is `bin > t`; ties
/// in the between-class variance resolve to the lowest threshold.
fn otsu_threshold(slice: &Slice) -> Option<usize> {
    let mut hist = [0u64; 256];
    for &v in slice.pixels() {
        hist[bin_of(v)] += 1;
    }
    let total: u64 = hist.iter().sum();
    let lo = hist.iter().position(|&c| c > 0)?;
    let hi = hist.iter().rposition(|&c| c > 0)?;
    if lo == hi {
        return None;
    }
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    let mut best = (f64::NEG_INFINITY, lo);
    for (t, &c) in hist.iter().enumerate().take(hi) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total as f64 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if between > best.0 {
            best = (between, t);
        }
    }
    Some(best.1)
}

/// Keeps only the largest 8-connected foreground component (ties go to
/// the component discovered first in scan order).
fn largest_component(mask: &mut [bool], w: usize, h: usize) {
    let mut comp = vec![0u32; w * h]; // 0 = unvisited
    let mut best = (0usize, 0u32);
    let mut next = 1u32;
    let mut queue = Vec::new();
    for start in 0..w * h {
        if !mask[start] || comp[start] != 0 {
            continue;
        }
        let id = next;
        next += 1;
        let mut size = 0usize;
        comp[start] = id;
        queue.push(start);
        while let Some(p) = queue.pop() {
            size += 1;
            let (x, y) = (p % w, p / w);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask[q] && comp[q] == 0 {
                        comp[q] = id;
                        queue.push(q);
                    }
                }
            }
        }
        if size > best.0 {
            best = (size, id);
        }
    }
    for (m, &c) in mask.iter_mut().zip(&comp) {
        *m = c == best.1;
    }
}

/// Morphological closing: `iterations` 3x3 dilations followed by the same
/// number of erosions. Outside the image counts as background.
fn closing(mask: &[bool], w: usize, h: usize, iterations: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..iterations {
        cur = dilate(&cur, w, h);
    }
    for _ in 0..iterations {
        cur = erode(&cur, w, h);
    }
    cur
}

fn dilate(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        out[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
    }
    out
}

fn erode(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        'pixel: for x in 0..w {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue 'pixel; // border neighbor is background
                    }
                    if !mask[ny as usize * w + nx as usize] {
                        continue 'pixel;
                    }
                }
            }
            out[y * w + x] = true;
        }
    }
    out
}

/// Fills interior holes: background connected (4-neighborhood) to the
/// image border stays background, everything else becomes foreground.
fn fill_holes(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut outside = vec![false; w * h];
    let mut queue = Vec::new();
    let push = |p: usize, outside: &mut Vec<bool>, queue: &mut Vec<usize>| {
        if !mask[p] && !outside[p] {
            outside[p] = true;
            queue.push(p);
        }
    };
    for x in 0..w {
        push(x, &mut outside, &mut queue);
        push((h - 1) * w + x, &mut outside, &mut queue);
    }
    for y in 0..h {
        push(y * w, &mut outside, &mut queue);
        push(y * w + w - 1, &mut outside, &mut queue);
    }
    while let Some(p) = queue.pop() {
        let (x, y) = (p % w, p / w);
        if x > 0 {
            push(p - 1, &mut outside, &mut queue);
        }
        if x + 1 < w {
            push(p + 1, &mut outside, &mut queue);
        }
        if y > 0 {
            push(p - w, &mut outside, &mut queue);
        }
        if y + 1 < h {
            push(p + w, &mut outside, &mut queue);
        }
    }
    (0..w * h).map(|p| mask[p] || !outside[p]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_slice(w: usize, h: usize, cx: f64, cy: f64, r: f64, fg: f64, bg: f64) -> Slice {
        let pixels = (0..w * h)
            .map(|p| {
                let (x, y) = ((p % w) as f64, (p / w) as f64);
                if (x - cx).powi(2) + (y - cy).powi(2) <= r * r {
                    fg
                } else {
                    bg
                }
            })
            .collect();
        Slice::new(w, h, pixels)
    }

    #[test]
    fn all_background_slice_gives_an_empty_mask() {
        let s = Slice::new(8, 8, vec![0.0; 64]);
        assert_eq!(candidate_region(&s).count(), 0);
        let s = Slice::new(8, 8, vec![0.37; 64]); // constant but nonzero
        assert_eq!(candidate_region(&s).count(), 0);
    }

    #[test]
    fn clean_disk_is_recovered_exactly() {
        let s = disk_slice(40, 40, 19.0, 20.0, 11.0, 0.7, 0.02);
        let r = candidate_region(&s);
        for y in 0..40 {
            for x in 0..40 {
                let inside =
                    (x as f64 - 19.0).powi(2) + (y as f64 - 20.0).powi(2) <= 11.0 * 11.0;
                assert_eq!(r.at(x, y), inside, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn interior_holes_are_filled() {
        let mut s = disk_slice(40, 40, 20.0, 20.0, 12.0, 0.7, 0.02);
        // Punch a dark hole in the middle.
        let mut px = s.pixels().to_vec();
        for y in 17..23 {
            for x in 17..23 {
                px[y * 40 + x] = 0.02;
            }
        }
        s = Slice::new(40, 40, px);
        let r = candidate_region(&s);
        assert!(r.at(20, 20), "hole must be filled");
        assert!(r.at(12, 20));
        assert!(!r.at(2, 2));
    }

    #[test]
    fn only_the_largest_component_survives() {
        let mut px = vec![0.0f64; 40 * 40];
        // Big blob.
        for y in 5..25 {
            for x in 5..25 {
                px[y * 40 + x] = 0.8;
            }
        }
        // Small distant blob.
        for y in 32..36 {
            for x in 32..36 {
                px[y * 40 + x] = 0.8;
            }
        }
        let r = candidate_region(&Slice::new(40, 40, px));
        assert!(r.at(10, 10));
        assert!(!r.at(33, 33));
    }
}
