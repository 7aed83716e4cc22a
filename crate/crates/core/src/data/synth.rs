//! Synthetic two-style shape dataset.
//!
//! Each class is a 2-D shape rendered at a randomized position, scale, and
//! rotation. The Photo style fills the shape with radial shading over a
//! textured mid-tone background plus Gaussian pixel noise; the Art style
//! draws only a dark, wobbled outline (1 to 3 px) on a near-white ground.
//! The two renderers share the geometry stream, so an (image index, style)
//! pair always depicts the same underlying shape instance.
//!
//! Every image draws from its own stream derived from the dataset seed and
//! the image's (class, style, index) triple, so generation is deterministic
//! and order-independent.

use crate::data::{BBox, Dataset, LabeledImage, STYLE_ART, STYLE_PHOTO};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const SHAPE_NAMES: [&str; 10] = [
    "circle", "square", "triangle", "star", "cross", "ring", "crescent", "arrow", "heart",
    "hexagon",
];

pub const MIN_RESOLUTION: usize = 16;

/// Shape interiors in unit coordinates (shape fits inside |x|,|y| <= ~0.9).
enum ShapeGeom {
    Circle,
    Square,
    Cross,
    Ring,
    Crescent,
    Heart,
    Polygon(Vec<(f64, f64)>),
}

fn regular_polygon(n: usize, radius: f64, start_deg: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let a = (start_deg + 360.0 * i as f64 / n as f64).to_radians();
            (radius * a.cos(), radius * a.sin())
        })
        .collect()
}

fn star_polygon() -> Vec<(f64, f64)> {
    (0..10)
        .map(|i| {
            let a = (90.0 + 36.0 * i as f64).to_radians();
            let r = if i % 2 == 0 { 1.0 } else { 0.45 };
            (r * a.cos(), r * a.sin())
        })
        .collect()
}

fn arrow_polygon() -> Vec<(f64, f64)> {
    vec![
        (-1.0, -0.24),
        (0.15, -0.24),
        (0.15, -0.55),
        (1.0, 0.0),
        (0.15, 0.55),
        (0.15, 0.24),
        (-1.0, 0.24),
    ]
}

impl ShapeGeom {
    fn new(shape_idx: usize) -> Self {
        match shape_idx {
            0 => ShapeGeom::Circle,
            1 => ShapeGeom::Square,
            2 => ShapeGeom::Polygon(regular_polygon(3, 1.0, 90.0)),
            3 => ShapeGeom::Polygon(star_polygon()),
            4 => ShapeGeom::Cross,
            5 => ShapeGeom::Ring,
            6 => ShapeGeom::Crescent,
            7 => ShapeGeom::Polygon(arrow_polygon()),
            8 => ShapeGeom::Heart,
            9 => ShapeGeom::Polygon(regular_polygon(6, 1.0, 0.0)),
            _ => unreachable!("shape index checked by gen_synthetic"),
        }
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        match self {
            ShapeGeom::Circle => x * x + y * y <= 1.0,
            ShapeGeom::Square => x.abs() <= 0.78 && y.abs() <= 0.78,
            ShapeGeom::Cross => {
                (x.abs() <= 1.0 && y.abs() <= 0.34) || (y.abs() <= 1.0 && x.abs() <= 0.34)
            }
            ShapeGeom::Ring => {
                let d2 = x * x + y * y;
                (0.55 * 0.55..=1.0).contains(&d2)
            }
            ShapeGeom::Crescent => {
                let dx = x - 0.45;
                x * x + y * y <= 1.0 && dx * dx + y * y > 0.7 * 0.7
            }
            ShapeGeom::Heart => {
                // Sextic heart curve (x^2 + y^2 - 1)^3 <= x^2 y^3, lobes up.
                let xs = x / 0.75;
                let ys = -y / 0.75;
                let a = xs * xs + ys * ys - 1.0;
                a * a * a - xs * xs * ys * ys * ys <= 0.0
            }
            ShapeGeom::Polygon(pts) => point_in_polygon(pts, x, y),
        }
    }
}

/// Even-odd ray casting; handles the non-convex star and arrow.
fn point_in_polygon(pts: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = pts.len() - 1;
    for i in 0..pts.len() {
        let (xi, yi) = pts[i];
        let (xj, yj) = pts[j];
        if (yi > y) != (yj > y) {
            let t = (y - yi) / (yj - yi);
            if x < xi + t * (xj - xi) {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Pose of one shape instance in pixel coordinates.
struct Pose {
    cx: f64,
    cy: f64,
    r: f64,
    theta: f64,
}

/// Shapes are upright with a small random tilt, like photographed objects;
/// unbounded rotation would turn ten-way shape recognition into a
/// rotation-invariance problem the small training splits cannot support.
pub const MAX_TILT: f64 = 0.25;

impl Pose {
    fn draw(rng: &mut Rng, res: usize) -> Pose {
        let s = res as f64;
        Pose {
            cx: rng.uniform(0.42, 0.58) * s,
            cy: rng.uniform(0.42, 0.58) * s,
            r: rng.uniform(0.24, 0.34) * s,
            theta: rng.uniform(-MAX_TILT, MAX_TILT),
        }
    }

    /// Maps a pixel-space point into shape unit coordinates.
    fn to_unit(&self, px: f64, py: f64) -> (f64, f64) {
        let dx = (px - self.cx) / self.r;
        let dy = (py - self.cy) / self.r;
        let (sin, cos) = self.theta.sin_cos();
        (dx * cos + dy * sin, -dx * sin + dy * cos)
    }
}

/// Rasterizes the shape interior by sampling pixel centers.
fn filled_mask(geom: &ShapeGeom, pose: &Pose, res: usize) -> Vec<bool> {
    let mut mask = vec![false; res * res];
    for py in 0..res {
        for px in 0..res {
            let (u, v) = pose.to_unit(px as f64 + 0.5, py as f64 + 0.5);
            mask[py * res + px] = geom.inside(u, v);
        }
    }
    mask
}

/// Tight pixel bounding box of the set bits; `None` for an empty mask.
fn mask_bbox(mask: &[bool], res: usize) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (res, res, 0usize, 0usize);
    let mut any = false;
    for py in 0..res {
        for px in 0..res {
            if mask[py * res + px] {
                any = true;
                x0 = x0.min(px);
                y0 = y0.min(py);
                x1 = x1.max(px);
                y1 = y1.max(py);
            }
        }
    }
    any.then(|| BBox {
        x: x0,
        y: y0,
        w: x1 - x0 + 1,
        h: y1 - y0 + 1,
    })
}

fn render_photo(geom: &ShapeGeom, pose: &Pose, rng: &mut Rng, res: usize) -> Tensor {
    let bg_base = rng.uniform(0.45, 0.65);
    let tex_amp = rng.uniform(0.03, 0.08);
    let tex_fx = rng.uniform(0.05, 0.15);
    let tex_fy = rng.uniform(0.05, 0.15);
    let tex_p1 = rng.uniform(0.0, std::f64::consts::TAU);
    let tex_p2 = rng.uniform(0.0, std::f64::consts::TAU);
    // Fill stays well below the background range so the silhouette never
    // washes out.
    let fill = [
        rng.uniform(0.05, 0.35),
        rng.uniform(0.05, 0.35),
        rng.uniform(0.05, 0.35),
    ];
    let noise_sigma = rng.uniform(0.015, 0.03);

    let mut data = vec![0.0; 3 * res * res];
    for py in 0..res {
        for px in 0..res {
            let fx = px as f64 + 0.5;
            let fy = py as f64 + 0.5;
            let (u, v) = pose.to_unit(fx, fy);
            let idx = py * res + px;
            if geom.inside(u, v) {
                let d = ((fx - pose.cx).powi(2) + (fy - pose.cy).powi(2)).sqrt() / pose.r;
                let shade = 1.0 - 0.5 * d.min(1.2);
                for c in 0..3 {
                    data[c * res * res + idx] = fill[c] * shade;
                }
            } else {
                let tex = tex_amp * (fx * tex_fx + tex_p1).sin() * (fy * tex_fy + tex_p2).sin();
                for c in 0..3 {
                    data[c * res * res + idx] = bg_base + tex;
                }
            }
        }
    }
    for v in &mut data {
        *v = (*v + rng.normal() * noise_sigma).clamp(0.0, 1.0);
    }
    Tensor::from_vec(&[3, res, res], data)
}

fn render_art(geom: &ShapeGeom, pose: &Pose, rng: &mut Rng, res: usize) -> Tensor {
    let bg_base = rng.uniform(0.93, 0.98);
    let tex_amp = rng.uniform(0.005, 0.02);
    let tex_fx = rng.uniform(0.05, 0.15);
    let tex_fy = rng.uniform(0.05, 0.15);
    let tex_p1 = rng.uniform(0.0, std::f64::consts::TAU);
    let tex_p2 = rng.uniform(0.0, std::f64::consts::TAU);
    let wob_amp = rng.uniform(0.4, 1.0);
    let wob_fx = rng.uniform(0.15, 0.35);
    let wob_fy = rng.uniform(0.15, 0.35);
    let wob_p1 = rng.uniform(0.0, std::f64::consts::TAU);
    let wob_p2 = rng.uniform(0.0, std::f64::consts::TAU);
    let stroke_px = 1 + rng.range(3) as usize;
    let ink = rng.uniform(0.05, 0.25);

    // The outline follows a wobbled copy of the interior: each sample point
    // is displaced by a smooth sinusoidal field before the inside test.
    let mut wobbled = vec![false; res * res];
    for py in 0..res {
        for px in 0..res {
            let fx = px as f64 + 0.5 + wob_amp * ((py as f64) * wob_fy + wob_p1).sin();
            let fy = py as f64 + 0.5 + wob_amp * ((px as f64) * wob_fx + wob_p2).sin();
            let (u, v) = pose.to_unit(fx, fy);
            wobbled[py * res + px] = geom.inside(u, v);
        }
    }
    // Boundary = interior pixels with an exterior 4-neighbor (image border
    // counts as exterior). Stroke width dilates the boundary set.
    let at = |x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && (x as usize) < res && (y as usize) < res && wobbled[y as usize * res + x as usize]
    };
    let mut ink_mask = vec![false; res * res];
    for py in 0..res as isize {
        for px in 0..res as isize {
            if !at(px, py) {
                continue;
            }
            let edge = !at(px - 1, py) || !at(px + 1, py) || !at(px, py - 1) || !at(px, py + 1);
            if !edge {
                continue;
            }
            match stroke_px {
                1 => ink_mask[py as usize * res + px as usize] = true,
                width => {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            if width == 2 && dx != 0 && dy != 0 {
                                continue;
                            }
                            let (nx, ny) = (px + dx, py + dy);
                            if nx >= 0 && ny >= 0 && (nx as usize) < res && (ny as usize) < res {
                                ink_mask[ny as usize * res + nx as usize] = true;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut data = vec![0.0; 3 * res * res];
    for py in 0..res {
        for px in 0..res {
            let idx = py * res + px;
            let value = if ink_mask[idx] {
                ink
            } else {
                let fx = px as f64 + 0.5;
                let fy = py as f64 + 0.5;
                let tex = tex_amp * (fx * tex_fx + tex_p1).sin() * (fy * tex_fy + tex_p2).sin();
                (bg_base + tex).clamp(0.0, 1.0)
            };
            for c in 0..3 {
                data[c * res * res + idx] = value;
            }
        }
    }
    Tensor::from_vec(&[3, res, res], data)
}

fn render_image(shape_idx: usize, style_id: usize, rng: &mut Rng, res: usize) -> LabeledImage {
    let geom = ShapeGeom::new(shape_idx);
    let pose = Pose::draw(rng, res);
    // The bbox describes the ideal (unwobbled) shape support; Art strokes may
    // overhang it by the wobble amplitude.
    let mask = filled_mask(&geom, &pose, res);
    let bbox = mask_bbox(&mask, res).unwrap_or(BBox {
        x: 0,
        y: 0,
        w: res,
        h: res,
    });
    let pixels = match style_id {
        STYLE_PHOTO => render_photo(&geom, &pose, rng, res),
        STYLE_ART => render_art(&geom, &pose, rng, res),
        _ => unreachable!("synthetic data has exactly two styles"),
    };
    LabeledImage {
        pixels,
        class_id: shape_idx,
        style_id,
        bbox: Some(bbox),
    }
}

/// Generates a balanced two-style dataset: `per_class_per_style` images of
/// every (class, style) pair, ordered by class, then style, then index.
pub fn gen_synthetic(
    seed: u64,
    num_classes: usize,
    per_class_per_style: usize,
    resolution: usize,
) -> Result<Dataset> {
    if num_classes == 0 || num_classes > SHAPE_NAMES.len() {
        return Err(Error::InvalidConfig(format!(
            "num_classes must be in 1..={}, got {}",
            SHAPE_NAMES.len(),
            num_classes
        )));
    }
    if per_class_per_style == 0 {
        return Err(Error::InvalidConfig("per_class_per_style must be positive".into()));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidConfig(format!(
            "resolution must be at least {}, got {}",
            MIN_RESOLUTION, resolution
        )));
    }
    let master = Rng::new(seed);
    let mut images = Vec::with_capacity(num_classes * 2 * per_class_per_style);
    for class_id in 0..num_classes {
        for style_id in [STYLE_PHOTO, STYLE_ART] {
            for idx in 0..per_class_per_style {
                let mut rng = master.derive(&format!("img/c{}/s{}/i{}", class_id, style_id, idx));
                images.push(render_image(class_id, style_id, &mut rng, resolution));
            }
        }
    }
    Ok(Dataset {
        images,
        class_names: SHAPE_NAMES[..num_classes].iter().map(|s| s.to_string()).collect(),
        num_styles: 2,
    })
}

/// Fraction of pixels whose channel-mean luminance exceeds `thresh`.
pub fn bright_pixel_fraction(pixels: &Tensor, thresh: f64) -> f64 {
    let shape = pixels.shape();
    let (h, w) = (shape[1], shape[2]);
    let data = pixels.data();
    let mut bright = 0usize;
    for i in 0..h * w {
        let lum = (data[i] + data[h * w + i] + data[2 * h * w + i]) / 3.0;
        if lum > thresh {
            bright += 1;
        }
    }
    bright as f64 / (h * w) as f64
}
