//! Binary PGM (P5) image I/O and the on-disk stack layout.
//!
//! A stack is a directory of per-slice planes, ordered by filename:
//!
//! ```text
//! stack_00/
//!   image_000.pgm     intensity, 16-bit, [0, 1] mapped to [0, 65535]
//!   labels_000.pgm    tissue labels 0..=3
//!   mask_000.pgm      head mask, 0 or 255
//! ```
//!
//! Labels and masks are optional: training requires labels, and
//! segmentation with provided masks requires masks. A suite root holds
//! one subdirectory per stack.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{FlisError, Result};
use crate::imaging::{CandidateRegion, LabelSlice, Slice, Stack};

/// Raw PGM plane. `data` always holds one `u16` per pixel; 8-bit files
/// just never exceed 255.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| FlisError::io(path, e))?;
    let bad = |what: &str| FlisError::PgmFormat { path: path.to_path_buf(), what: what.into() };

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2usize;
    let mut fields = [0usize; 3]; // width, height, maxval
    for field in fields.iter_mut() {
        // Whitespace and # comments separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_digit() => break,
                _ => return Err(bad("truncated header")),
            }
        }
        let mut v = 0usize;
        while let Some(b) = bytes.get(pos) {
            if !b.is_ascii_digit() {
                break;
            }
            v = v
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or_else(|| bad("header value overflows"))?;
            pos += 1;
        }
        *field = v;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing whitespace after maxval")),
    }

    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval outside 1..=65535"));
    }
    let maxval = maxval as u16;
    let per_px = if maxval > 255 { 2 } else { 1 };
    let expected = width * height * per_px;
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(bad("pixel data shorter than header promises"));
    }
    if body.len() > expected {
        return Err(bad("trailing bytes after pixel data"));
    }
    let data: Vec<u16> = if per_px == 1 {
        body.iter().map(|&b| b as u16).collect()
    } else {
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if let Some(&v) = data.iter().find(|&&v| v > maxval) {
        return Err(bad(&format!("pixel value {v} exceeds maxval {maxval}")));
    }
    Ok(Pgm { width, height, maxval, data })
}

pub fn write_pgm(path: &Path, pgm: &Pgm) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| FlisError::io(parent, e))?;
    }
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval > 255 {
        for &v in &pgm.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(pgm.data.iter().map(|&v| v as u8));
    }
    fs::write(path, out).map_err(|e| FlisError::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Slice> {
    let pgm = read_pgm(path)?;
    let scale = 1.0 / pgm.maxval as f64;
    let pixels = pgm.data.iter().map(|&v| v as f64 * scale).collect();
    Ok(Slice::new(pgm.width, pgm.height, pixels))
}

pub fn write_image(path: &Path, slice: &Slice) -> Result<()> {
    let data = slice
        .pixels()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    write_pgm(path, &Pgm { width: slice.width(), height: slice.height(), maxval: 65535, data })
}

pub fn read_label_plane(path: &Path) -> Result<LabelSlice> {
    let pgm = read_pgm(path)?;
    let labels: Vec<u8> = pgm.data.iter().map(|&v| v.min(255) as u8).collect();
    LabelSlice::new(pgm.width, pgm.height, labels).map_err(|e| FlisError::PgmFormat {
        path: path.to_path_buf(),
        what: e.to_string(),
    })
}

pub fn write_label_plane(path: &Path, labels: &LabelSlice) -> Result<()> {
    let data = labels.labels().iter().map(|&v| v as u16).collect();
    write_pgm(path, &Pgm { width: labels.width(), height: labels.height(), maxval: 3, data })
}

pub fn read_mask_plane(path: &Path) -> Result<CandidateRegion> {
    let pgm = read_pgm(path)?;
    let mask = pgm.data.iter().map(|&v| v > 0).collect();
    Ok(CandidateRegion::new(pgm.width, pgm.height, mask))
}

pub fn write_mask_plane(path: &Path, region: &CandidateRegion) -> Result<()> {
    let data = region.mask().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_pgm(path, &Pgm { width: region.width(), height: region.height(), maxval: 255, data })
}

/// Reads one stack directory. Slices are the `image_*.pgm` files in
/// filename order; labels and masks are loaded when every matching file
/// exists, and demanded up front when `need_labels`/`need_masks` is set.
pub fn read_stack_dir(dir: &Path, need_labels: bool, need_masks: bool) -> Result<Stack> {
    let mut image_paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| FlisError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map_or(false, |n| n.starts_with("image_") && n.ends_with(".pgm"))
        })
        .collect();
    image_paths.sort();
    if image_paths.is_empty() {
        return Err(FlisError::InvalidArgument(format!(
            "no image planes (image_*.pgm) in {}",
            dir.display()
        )));
    }

    let sibling = |image: &Path, prefix: &str| -> PathBuf {
        let name = image.file_name().unwrap().to_str().unwrap();
        image.with_file_name(name.replacen("image_", prefix, 1))
    };

    let mut images = Vec::with_capacity(image_paths.len());
    let mut labels = Vec::new();
    let mut masks = Vec::new();
    let mut all_labels = true;
    let mut all_masks = true;
    for path in &image_paths {
        images.push(read_image(path)?);
        let label_path = sibling(path, "labels_");
        if label_path.is_file() {
            if all_labels {
                labels.push(read_label_plane(&label_path)?);
            }
        } else if need_labels {
            return Err(FlisError::InvalidArgument(format!(
                "labels not found for {}",
                path.display()
            )));
        } else {
            all_labels = false;
        }
        let mask_path = sibling(path, "mask_");
        if mask_path.is_file() {
            if all_masks {
                masks.push(read_mask_plane(&mask_path)?);
            }
        } else if need_masks {
            return Err(FlisError::InvalidArgument(format!(
                "mask not found for {}",
                path.display()
            )));
        } else {
            all_masks = false;
        }
    }

    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("stack")
        .to_string();
    let stack = Stack {
        name,
        images,
        labels: (all_labels && !labels.is_empty()).then_some(labels),
        masks: (all_masks && !masks.is_empty()).then_some(masks),
    };
    stack.validate()?;
    Ok(stack)
}

/// Reads every stack subdirectory under `root`, sorted by name.
pub fn read_stacks(root: &Path, need_labels: bool, need_masks: bool) -> Result<Vec<Stack>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| FlisError::io(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(FlisError::InvalidArgument(format!(
            "no stack directories under {}",
            root.display()
        )));
    }
    dirs.iter().map(|d| read_stack_dir(d, need_labels, need_masks)).collect()
}

/// Writes a stack as one directory of planes under `root`.
pub fn write_stack(root: &Path, stack: &Stack) -> Result<()> {
    stack.validate()?;
    let dir = root.join(&stack.name);
    for (z, image) in stack.images.iter().enumerate() {
        write_image(&dir.join(format!("image_{z:03}.pgm")), image)?;
        if let Some(labels) = &stack.labels {
            write_label_plane(&dir.join(format!("labels_{z:03}.pgm")), &labels[z])?;
        }
        if let Some(masks) = &stack.masks {
            write_mask_plane(&dir.join(format!("mask_{z:03}.pgm")), &masks[z])?;
        }
    }
    Ok(())
}
