//! Datasets of style-tagged labeled images and the transforms used by the
//! training and evaluation pipelines.
//!
//! Images are `[3, H, W]` tensors with channel values in `[0, 1]`. Style ids
//! are `0` = Photo, `1` = Art throughout. All randomized operations take an
//! explicit [`Rng`] so a run is reproducible from its seed alone.

pub mod packed;
pub mod ppm;
pub mod synth;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const STYLE_PHOTO: usize = 0;
pub const STYLE_ART: usize = 1;
pub const STYLE_NAMES: [&str; 2] = ["photo", "art"];

/// Axis-aligned box in pixel units, `x`/`w` along the width axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    /// `[3, H, W]`, values in `[0, 1]`.
    pub pixels: Tensor,
    pub class_id: usize,
    pub style_id: usize,
    pub bbox: Option<BBox>,
}

impl LabeledImage {
    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub class_names: Vec<String>,
    pub num_styles: usize,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Indices of all images with the given class and style, in dataset order.
    pub fn cell_indices(&self, class_id: usize, style_id: usize) -> Vec<usize> {
        self.images
            .iter()
            .enumerate()
            .filter(|(_, im)| im.class_id == class_id && im.style_id == style_id)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-(class, style) cell sizes for one split. Whatever a cell has left
/// after the train and test draws becomes validation.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_per_cell: usize,
    pub test_per_cell: usize,
    pub seed: u64,
}

/// Index lists into a [`Dataset`]. Disjoint by construction.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws `num_splits` independent train/test/val partitions. Split `i`
/// shuffles every (class, style) cell with a fresh stream seeded
/// `spec.seed + i`, takes the first `train_per_cell` for train and the next
/// `test_per_cell` for test; the remainder is validation. Cells too small
/// for the requested counts are an error.
pub fn make_splits(ds: &Dataset, spec: &SplitSpec, num_splits: usize) -> Result<Vec<Split>> {
    let need = spec.train_per_cell + spec.test_per_cell;
    let mut out = Vec::with_capacity(num_splits);
    for split_idx in 0..num_splits {
        let mut rng = Rng::new(spec.seed.wrapping_add(split_idx as u64));
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for class_id in 0..ds.num_classes() {
            for style_id in 0..ds.num_styles {
                let mut cell = ds.cell_indices(class_id, style_id);
                if cell.len() < need {
                    return Err(Error::Data(format!(
                        "class {} style {} has {} images, split needs {}",
                        class_id,
                        style_id,
                        cell.len(),
                        need
                    )));
                }
                rng.shuffle(&mut cell);
                split.train.extend_from_slice(&cell[..spec.train_per_cell]);
                split.test.extend_from_slice(&cell[spec.train_per_cell..need]);
                split.val.extend_from_slice(&cell[need..]);
            }
        }
        out.push(split);
    }
    Ok(out)
}

/// Bilinear rescale so the smaller spatial side equals `target`; the other
/// side scales by the same factor (rounded). The bbox is scaled by the same
/// per-axis factors. A constant image stays constant, and an image whose
/// smaller side already equals `target` is returned bit-identically.
pub fn rescale_smallest_side(img: &LabeledImage, target: usize) -> Result<LabeledImage> {
    if target == 0 {
        return Err(Error::InvalidConfig("rescale target must be positive".into()));
    }
    let (h, w) = (img.height(), img.width());
    if h.min(w) == target {
        return Ok(img.clone());
    }
    let scale = target as f64 / h.min(w) as f64;
    let (nh, nw) = if h <= w {
        (target, (w as f64 * scale).round().max(1.0) as usize)
    } else {
        ((h as f64 * scale).round().max(1.0) as usize, target)
    };
    let src = img.pixels.data();
    let mut dst = vec![0.0; 3 * nh * nw];
    let fy = h as f64 / nh as f64;
    let fx = w as f64 / nw as f64;
    for dy in 0..nh {
        let sy = ((dy as f64 + 0.5) * fy - 0.5).max(0.0);
        let y0 = (sy as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ty = sy - y0 as f64;
        for dx in 0..nw {
            let sx = ((dx as f64 + 0.5) * fx - 0.5).max(0.0);
            let x0 = (sx as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let tx = sx - x0 as f64;
            for c in 0..3 {
                let base = c * h * w;
                let p00 = src[base + y0 * w + x0];
                let p01 = src[base + y0 * w + x1];
                let p10 = src[base + y1 * w + x0];
                let p11 = src[base + y1 * w + x1];
                let top = p00 + (p01 - p00) * tx;
                let bot = p10 + (p11 - p10) * tx;
                dst[c * nh * nw + dy * nw + dx] = top + (bot - top) * ty;
            }
        }
    }
    let sx_factor = nw as f64 / w as f64;
    let sy_factor = nh as f64 / h as f64;
    let bbox = img.bbox.map(|b| {
        let x = ((b.x as f64 * sx_factor).round() as usize).min(nw - 1);
        let y = ((b.y as f64 * sy_factor).round() as usize).min(nh - 1);
        let bw = ((b.w as f64 * sx_factor).round() as usize).max(1).min(nw - x);
        let bh = ((b.h as f64 * sy_factor).round() as usize).max(1).min(nh - y);
        BBox { x, y, w: bw, h: bh }
    });
    Ok(LabeledImage {
        pixels: Tensor::from_vec(&[3, nh, nw], dst),
        class_id: img.class_id,
        style_id: img.style_id,
        bbox,
    })
}

/// Copies the `crop`-sized window whose top-left corner is `(y0, x0)`.
pub fn crop_at(pixels: &Tensor, y0: usize, x0: usize, crop: usize) -> Result<Tensor> {
    let shape = pixels.shape();
    if shape.len() != 3 {
        return Err(Error::shape("crop_at", "expected [C, H, W]"));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if y0 + crop > h || x0 + crop > w {
        return Err(Error::shape(
            "crop_at",
            format!("window {}x{} at ({}, {}) exceeds {}x{}", crop, crop, y0, x0, h, w),
        ));
    }
    let src = pixels.data();
    let mut dst = vec![0.0; c * crop * crop];
    for ch in 0..c {
        for dy in 0..crop {
            let srow = ch * h * w + (y0 + dy) * w + x0;
            let drow = ch * crop * crop + dy * crop;
            dst[drow..drow + crop].copy_from_slice(&src[srow..srow + crop]);
        }
    }
    Ok(Tensor::from_vec(&[c, crop, crop], dst))
}

/// Top-left corners of the five-crop windows, `(y, x)` order: the four
/// corners then the center.
pub fn five_crop_offsets(h: usize, w: usize, crop: usize) -> Result<[(usize, usize); 5]> {
    if crop > h || crop > w {
        return Err(Error::shape(
            "five_crop",
            format!("crop {} exceeds image {}x{}", crop, h, w),
        ));
    }
    Ok([
        (0, 0),
        (0, w - crop),
        (h - crop, 0),
        (h - crop, w - crop),
        ((h - crop) / 2, (w - crop) / 2),
    ])
}

/// The four corner crops plus the center crop, in [`five_crop_offsets`] order.
pub fn five_crop(pixels: &Tensor, crop: usize) -> Result<Vec<Tensor>> {
    let shape = pixels.shape();
    if shape.len() != 3 {
        return Err(Error::shape("five_crop", "expected [C, H, W]"));
    }
    let offsets = five_crop_offsets(shape[1], shape[2], crop)?;
    offsets
        .iter()
        .map(|&(y, x)| crop_at(pixels, y, x, crop))
        .collect()
}

/// Top-left corner of the bbox-centered crop window (geometric image center
/// when no bbox is present), clamped so the window stays in bounds.
fn bbox_crop_corner(img: &LabeledImage, crop: usize) -> Result<(usize, usize)> {
    let (h, w) = (img.height(), img.width());
    if crop > h || crop > w {
        return Err(Error::shape(
            "center_crop_bbox",
            format!("crop {} exceeds image {}x{}", crop, h, w),
        ));
    }
    let (cy, cx) = match img.bbox {
        Some(b) => (b.y + b.h / 2, b.x + b.w / 2),
        None => (h / 2, w / 2),
    };
    let y0 = (cy as isize - (crop / 2) as isize).clamp(0, (h - crop) as isize) as usize;
    let x0 = (cx as isize - (crop / 2) as isize).clamp(0, (w - crop) as isize) as usize;
    Ok((y0, x0))
}

/// Crop window centered on the bbox center (geometric image center when no
/// bbox is present), with the corner clamped so the window stays in bounds.
pub fn center_crop_bbox(img: &LabeledImage, crop: usize) -> Result<Tensor> {
    let (y0, x0) = bbox_crop_corner(img, crop)?;
    crop_at(&img.pixels, y0, x0, crop)
}

/// Bbox-centered crop whose window is shifted by an offset drawn uniformly
/// from `[-jitter, jitter]` per axis, clamped back into bounds. Draws two
/// values even when the clamp pins the window, keeping the rng stream's
/// shape independent of image geometry.
pub fn center_crop_bbox_jittered(
    img: &LabeledImage,
    crop: usize,
    jitter: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let (y0, x0) = bbox_crop_corner(img, crop)?;
    let (h, w) = (img.height(), img.width());
    let j = jitter as isize;
    let dy = rng.range(2 * jitter + 1) as isize - j;
    let dx = rng.range(2 * jitter + 1) as isize - j;
    let y = (y0 as isize + dy).clamp(0, (h - crop) as isize) as usize;
    let x = (x0 as isize + dx).clamp(0, (w - crop) as isize) as usize;
    crop_at(&img.pixels, y, x, crop)
}

/// Training-time augmentation: horizontal flip with probability 1/2 and a
/// per-channel uniform offset in `[-0.05, 0.05]` clamped back to `[0, 1]`.
/// Each enabled stage consumes a fixed number of draws (flip: 1, jitter: 3);
/// a disabled stage consumes none and is the identity.
pub fn augment_train(img: &LabeledImage, rng: &mut Rng, hflip: bool, rgb_jitter: bool) -> LabeledImage {
    let mut out = img.clone();
    if hflip && rng.next_f64() < 0.5 {
        let (h, w) = (out.height(), out.width());
        let data = out.pixels.data_mut();
        for c in 0..3 {
            for y in 0..h {
                let row = c * h * w + y * w;
                data[row..row + w].reverse();
            }
        }
        if let Some(b) = out.bbox.as_mut() {
            b.x = w - b.x - b.w;
        }
    }
    if rgb_jitter {
        let (h, w) = (out.height(), out.width());
        for c in 0..3 {
            let delta = rng.uniform(-0.05, 0.05);
            let data = out.pixels.data_mut();
            for v in &mut data[c * h * w..(c + 1) * h * w] {
                *v = (*v + delta).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Pools five-crop class probabilities by averaging the rows and taking the
/// argmax (ties resolve to the lowest class index). Each row must already be
/// a probability vector; a row sum off `1` by more than `1e-6` is an error.
pub fn pool_five_crop_predictions(probs: &Tensor) -> Result<usize> {
    let shape = probs.shape();
    if shape.len() != 2 || shape[0] != 5 {
        return Err(Error::shape("pool_five_crop", "expected [5, num_classes]"));
    }
    let k = shape[1];
    let data = probs.data();
    let mut mean = vec![0.0; k];
    for row in 0..5 {
        let r = &data[row * k..(row + 1) * k];
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Data(format!(
                "five-crop row {} sums to {}, expected a probability vector",
                row, sum
            )));
        }
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    let mut best = 0;
    for (i, v) in mean.iter().enumerate() {
        if *v > mean[best] {
            best = i;
        }
    }
    Ok(best)
}
