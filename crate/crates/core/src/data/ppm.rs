//! PPM (P6, 8-bit) image files, bbox sidecars, and the on-disk dataset
//! layout `root/<class>/<style>/<name>.ppm` with `style` in {photo, art}.

use std::io::Read;
use std::path::{Path, PathBuf};

use crate::data::{BBox, Dataset, LabeledImage, STYLE_NAMES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encodes `[3, H, W]` pixels in `[0, 1]` as binary PPM, one byte per
/// channel, `round(v * 255)`.
pub fn write_ppm(path: &Path, pixels: &Tensor) -> Result<()> {
    let shape = pixels.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::shape("write_ppm", "expected [3, H, W]"));
    }
    let (h, w) = (shape[1], shape[2]);
    let data = pixels.data();
    let mut bytes = Vec::with_capacity(3 * h * w + 32);
    bytes.extend_from_slice(format!("P6\n{} {}\n255\n", w, h).as_bytes());
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = (data[c * h * w + y * w + x] * 255.0).round().clamp(0.0, 255.0);
                bytes.push(v as u8);
            }
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn read_token<R: Read>(r: &mut R, path: &Path) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match r.read_exact(&mut byte) {
            Ok(()) => {}
            Err(_) if !tok.is_empty() => return Ok(tok),
            Err(_) => return Err(Error::format(path, "truncated PPM header")),
        }
        let ch = byte[0];
        if in_comment {
            if ch == b'\n' {
                in_comment = false;
            }
            continue;
        }
        match ch {
            b'#' => in_comment = true,
            b' ' | b'\t' | b'\r' | b'\n' => {
                if !tok.is_empty() {
                    return Ok(tok);
                }
            }
            _ => tok.push(ch as char),
        }
    }
}

/// Decodes a binary 8-bit PPM into `[3, H, W]` reals, byte / 255.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let magic = read_token(&mut r, path)?;
    if magic != "P6" {
        return Err(Error::format(path, format!("expected P6 magic, got {:?}", magic)));
    }
    let parse = |tok: String| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad header number {:?}", tok)))
    };
    let w = parse(read_token(&mut r, path)?)?;
    let h = parse(read_token(&mut r, path)?)?;
    let maxval = parse(read_token(&mut r, path)?)?;
    if maxval != 255 {
        return Err(Error::format(path, format!("only 8-bit PPM supported, maxval {}", maxval)));
    }
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero-sized image"));
    }
    let mut raster = vec![0u8; 3 * h * w];
    r.read_exact(&mut raster)
        .map_err(|_| Error::format(path, "truncated PPM raster"))?;
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[c * h * w + y * w + x] = raster[(y * w + x) * 3 + c] as f64 / 255.0;
            }
        }
    }
    Ok(Tensor::from_vec(&[3, h, w], data))
}

pub fn write_bbox(path: &Path, bbox: &BBox) -> Result<()> {
    std::fs::write(path, format!("{} {} {} {}\n", bbox.x, bbox.y, bbox.w, bbox.h))
        .map_err(|e| Error::io(path, e))
}

/// Parses the first four integers of a bbox sidecar; any further annotations
/// on the line are dropped (one box per image).
pub fn read_bbox(path: &Path, img_h: usize, img_w: usize) -> Result<BBox> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut nums = text.split_whitespace().map(|t| t.parse::<usize>());
    let mut next = || -> Result<usize> {
        nums.next()
            .transpose()
            .ok()
            .flatten()
            .ok_or_else(|| Error::format(path, "bbox file needs four integers: x y w h"))
    };
    let (x, y, w, h) = (next()?, next()?, next()?, next()?);
    // Clamp into bounds so downstream crop math never leaves the image.
    let x = x.min(img_w.saturating_sub(1));
    let y = y.min(img_h.saturating_sub(1));
    Ok(BBox {
        x,
        y,
        w: w.clamp(1, img_w - x),
        h: h.clamp(1, img_h - y),
    })
}

fn sorted_entries(dir: &Path, dirs_only: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() == dirs_only {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads `root/<class>/<style>/<name>.ppm` (+ optional `.bbox` sidecars)
/// into a dataset. Class names are the directory names, sorted; images sort
/// by file name within each (class, style) cell.
pub fn load_dir(root: &Path) -> Result<Dataset> {
    let class_dirs = sorted_entries(root, true)?;
    if class_dirs.is_empty() {
        return Err(Error::Data(format!("no class directories under {}", root.display())));
    }
    let mut images = Vec::new();
    let mut class_names = Vec::new();
    for (class_id, class_dir) in class_dirs.iter().enumerate() {
        class_names.push(
            class_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        for style_dir in sorted_entries(class_dir, true)? {
            let style_name = style_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            if !STYLE_NAMES.contains(&style_name.as_str()) {
                return Err(Error::Data(format!(
                    "unknown style directory {:?} under {} (expected photo or art)",
                    style_name,
                    class_dir.display()
                )));
            }
        }
        // Photo before Art regardless of directory sort order, so style ids
        // match generation order.
        for (style_id, style_name) in STYLE_NAMES.iter().enumerate() {
            let style_dir = class_dir.join(style_name);
            if !style_dir.is_dir() {
                continue;
            }
            for file in sorted_entries(&style_dir, false)? {
                if file.extension().and_then(|e| e.to_str()) != Some("ppm") {
                    continue;
                }
                let pixels = read_ppm(&file)?;
                let (h, w) = (pixels.shape()[1], pixels.shape()[2]);
                let sidecar = file.with_extension("bbox");
                let bbox = if sidecar.exists() {
                    Some(read_bbox(&sidecar, h, w)?)
                } else {
                    None
                };
                images.push(LabeledImage {
                    pixels,
                    class_id,
                    style_id,
                    bbox,
                });
            }
        }
    }
    Ok(Dataset {
        images,
        class_names,
        num_styles: 2,
    })
}

/// Writes a dataset in the [`load_dir`] layout. File names are the image's
/// index in the dataset, so a save/load round trip preserves cell order.
pub fn save_dir(ds: &Dataset, root: &Path) -> Result<()> {
    for (i, img) in ds.images.iter().enumerate() {
        let class = ds
            .class_names
            .get(img.class_id)
            .ok_or_else(|| Error::Data(format!("image {} has class_id out of range", i)))?;
        let style = STYLE_NAMES
            .get(img.style_id)
            .ok_or_else(|| Error::Data(format!("image {} has style_id out of range", i)))?;
        let dir = root.join(class).join(style);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stem = dir.join(format!("img_{:05}", i));
        write_ppm(&stem.with_extension("ppm"), &img.pixels)?;
        if let Some(b) = &img.bbox {
            write_bbox(&stem.with_extension("bbox"), b)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::gen_synthetic;

    #[test]
    fn known_bytes_decode_to_exact_reals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("px.ppm");
        std::fs::write(&path, b"P6\n1 1\n255\n\xff\x00\x80").unwrap();
        let t = read_ppm(&path).unwrap();
        assert_eq!(t.shape(), &[3, 1, 1]);
        assert_eq!(t.data(), &[1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn ppm_roundtrip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut data = vec![0.0; 3 * 4 * 5];
        for (i, v) in data.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        let t = Tensor::from_vec(&[3, 4, 5], data);
        write_ppm(&path, &t).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.shape(), &[3, 4, 5]);
        assert_eq!(back.data(), t.data(), "values on the 1/255 grid round-trip exactly");
    }

    #[test]
    fn header_comments_and_whitespace_are_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        std::fs::write(&path, b"P6 # comment\n# another\n 2\t1 \n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        let t = read_ppm(&path).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
    }

    #[test]
    fn malformed_headers_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p5 = dir.path().join("p5.ppm");
        std::fs::write(&p5, b"P5\n1 1\n255\n\x00").unwrap();
        assert!(matches!(read_ppm(&p5), Err(Error::Format { .. })));
        let deep = dir.path().join("deep.ppm");
        std::fs::write(&deep, b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_ppm(&deep), Err(Error::Format { .. })));
        let short = dir.path().join("short.ppm");
        std::fs::write(&short, b"P6\n2 2\n255\n\x00").unwrap();
        assert!(matches!(read_ppm(&short), Err(Error::Format { .. })));
    }

    #[test]
    fn save_dir_load_dir_round_trips_a_dataset() {
        let ds = gen_synthetic(3, 2, 3, 24).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dir(&ds, dir.path()).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert_eq!(back.images.len(), 12);
        assert_eq!(back.class_names, ds.class_names);
        // Same (class, style) multiset; pixel values agree on the 8-bit grid.
        for (a, b) in ds.images.iter().zip(&back.images) {
            assert_eq!(a.class_id, b.class_id);
            assert_eq!(a.style_id, b.style_id);
            assert_eq!(a.bbox, b.bbox);
            for (x, y) in a.pixels.data().iter().zip(b.pixels.data()) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn unknown_style_directory_is_a_layout_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("circle").join("sketch");
        std::fs::create_dir_all(&bad).unwrap();
        let err = load_dir(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "got {:?}", err);
    }

    #[test]
    fn bbox_sidecar_takes_first_four_integers_and_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bbox");
        std::fs::write(&path, "3 4 10 12 99 99 99 99\n").unwrap();
        let b = read_bbox(&path, 16, 16).unwrap();
        assert_eq!(b, BBox { x: 3, y: 4, w: 10, h: 12 });
        std::fs::write(&path, "30 4 10 12\n").unwrap();
        let clamped = read_bbox(&path, 16, 16).unwrap();
        assert_eq!(clamped, BBox { x: 15, y: 4, w: 1, h: 12 });
        std::fs::write(&path, "1 2 3\n").unwrap();
        assert!(matches!(read_bbox(&path, 16, 16), Err(Error::Format { .. })));
    }
}
