//! Packed dataset files.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic "SWDS" | version u8 = 1
//! num_classes u32 | num_styles u8 | num_images u32
//! per class:  name_len u16 | UTF-8 name bytes
//! per image:  class_id u16 | style_id u8 | bbox_flag u8
//!             [x u16 | y u16 | w u16 | h u16]   (present iff bbox_flag = 1)
//!             pixel tensor in SWTN format
//! ```
//!
//! f64 pixel payloads round-trip bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::{BBox, Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::tensor::{read_swtn, write_swtn};

const MAGIC: &[u8; 4] = b"SWDS";
const VERSION: u8 = 1;

fn check_u16(value: usize, what: &str) -> Result<u16> {
    u16::try_from(value).map_err(|_| Error::Data(format!("{} {} exceeds packed-format limit", what, value)))
}

pub fn save_packed(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&[VERSION]).map_err(io_err)?;
    w.write_all(&(ds.class_names.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&[u8::try_from(ds.num_styles)
        .map_err(|_| Error::Data("num_styles exceeds packed-format limit".into()))?])
        .map_err(io_err)?;
    w.write_all(&(ds.images.len() as u32).to_le_bytes()).map_err(io_err)?;
    for name in &ds.class_names {
        let bytes = name.as_bytes();
        w.write_all(&check_u16(bytes.len(), "class name length")?.to_le_bytes())
            .map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
    }
    for img in &ds.images {
        w.write_all(&check_u16(img.class_id, "class_id")?.to_le_bytes()).map_err(io_err)?;
        w.write_all(&[u8::try_from(img.style_id)
            .map_err(|_| Error::Data("style_id exceeds packed-format limit".into()))?])
            .map_err(io_err)?;
        match &img.bbox {
            Some(b) => {
                w.write_all(&[1]).map_err(io_err)?;
                for v in [b.x, b.y, b.w, b.h] {
                    w.write_all(&check_u16(v, "bbox coordinate")?.to_le_bytes()).map_err(io_err)?;
                }
            }
            None => w.write_all(&[0]).map_err(io_err)?,
        }
        write_swtn(&mut w, &img.pixels).map_err(io_err)?;
    }
    Ok(())
}

pub fn load_packed(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let bad = |msg: &str| Error::format(path, msg);

    let mut head = [0u8; 5];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[..4] != MAGIC {
        return Err(bad("bad magic, not a packed dataset"));
    }
    if head[4] != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", head[4])));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
    let num_classes = u32::from_le_bytes(u32buf) as usize;
    let mut u8buf = [0u8; 1];
    r.read_exact(&mut u8buf).map_err(|_| bad("truncated header"))?;
    let num_styles = u8buf[0] as usize;
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
    let num_images = u32::from_le_bytes(u32buf) as usize;

    let mut u16buf = [0u8; 2];
    let mut class_names = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        r.read_exact(&mut u16buf).map_err(|_| bad("truncated class table"))?;
        let len = u16::from_le_bytes(u16buf) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| bad("truncated class table"))?;
        class_names.push(String::from_utf8(name).map_err(|_| bad("class name is not UTF-8"))?);
    }

    let mut images = Vec::with_capacity(num_images);
    for i in 0..num_images {
        r.read_exact(&mut u16buf)
            .map_err(|_| Error::format(path, format!("truncated image record {}", i)))?;
        let class_id = u16::from_le_bytes(u16buf) as usize;
        if class_id >= num_classes {
            return Err(Error::format(path, format!("image {} class_id {} out of range", i, class_id)));
        }
        let mut two = [0u8; 2];
        r.read_exact(&mut two)
            .map_err(|_| Error::format(path, format!("truncated image record {}", i)))?;
        let style_id = two[0] as usize;
        if style_id >= num_styles {
            return Err(Error::format(path, format!("image {} style_id {} out of range", i, style_id)));
        }
        let bbox = match two[1] {
            0 => None,
            1 => {
                let mut coords = [0usize; 4];
                for c in coords.iter_mut() {
                    r.read_exact(&mut u16buf)
                        .map_err(|_| Error::format(path, format!("truncated bbox in record {}", i)))?;
                    *c = u16::from_le_bytes(u16buf) as usize;
                }
                Some(BBox {
                    x: coords[0],
                    y: coords[1],
                    w: coords[2],
                    h: coords[3],
                })
            }
            other => {
                return Err(Error::format(path, format!("image {} has bbox flag {}", i, other)));
            }
        };
        let pixels = read_swtn(&mut r, path)?;
        if pixels.shape().len() != 3 {
            return Err(Error::format(path, format!("image {} tensor is not rank 3", i)));
        }
        images.push(LabeledImage {
            pixels,
            class_id,
            style_id,
            bbox,
        });
    }
    Ok(Dataset {
        images,
        class_names,
        num_styles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::gen_synthetic;

    #[test]
    fn packed_roundtrip_is_bit_exact() {
        let mut ds = gen_synthetic(17, 3, 2, 24).unwrap();
        ds.images[2].bbox = None;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.swds");
        save_packed(&ds, &path).unwrap();
        let back = load_packed(&path).unwrap();
        assert_eq!(back.class_names, ds.class_names);
        assert_eq!(back.num_styles, ds.num_styles);
        assert_eq!(back.images.len(), ds.images.len());
        for (a, b) in ds.images.iter().zip(&back.images) {
            assert_eq!(a.class_id, b.class_id);
            assert_eq!(a.style_id, b.style_id);
            assert_eq!(a.bbox, b.bbox);
            assert_eq!(a.pixels.shape(), b.pixels.shape());
            let bits_a: Vec<u64> = a.pixels.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.pixels.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn save_twice_produces_identical_bytes() {
        let ds = gen_synthetic(5, 2, 2, 24).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.swds"), dir.path().join("b.swds"));
        save_packed(&ds, &p1).unwrap();
        save_packed(&ds, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupted_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.swds");
        std::fs::write(&path, b"SWTNnot-a-dataset").unwrap();
        assert!(matches!(load_packed(&path), Err(Error::Format { .. })));
        let ds = gen_synthetic(1, 1, 1, 24).unwrap();
        let good = dir.path().join("good.swds");
        save_packed(&ds, &good).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() / 2);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_packed(&path), Err(Error::Format { .. })));
    }
}
