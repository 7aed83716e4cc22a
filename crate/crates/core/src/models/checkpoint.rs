//! Checkpoints: named parameter tensors behind an architecture fingerprint.
//!
//! Layout (all integers little-endian):
//!
//!   bytes 0..4   magic "SWCK"
//!   byte  4      version, currently 1
//!   bytes 5..13  u64 FNV-1a hash of the network's canonical spec string
//!   bytes 13..17 u32 parameter count
//!   then per parameter: u16 name length, UTF-8 name, tensor in SWTN format
//!
//! Only parameter values are stored; momentum buffers are training state,
//! not part of the model.

use super::Network;
use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use crate::tensor::{read_swtn, write_swtn};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SWCK";
const VERSION: u8 = 1;

pub fn checkpoint_save(net: &Network, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&[VERSION]).map_err(io)?;
    w.write_all(&fnv1a64(net.spec_string.as_bytes()).to_le_bytes())
        .map_err(io)?;
    let params = net.params();
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io)?;
    for p in params {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes()).map_err(io)?;
        w.write_all(name).map_err(io)?;
        write_swtn(&mut w, &p.value).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn checkpoint_load(net: &mut Network, path: &Path) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut head = [0u8; 5];
    r.read_exact(&mut head).map_err(io)?;
    if &head[0..4] != MAGIC {
        return Err(Error::format(path, "missing SWCK magic"));
    }
    if head[4] != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {}", head[4]),
        ));
    }
    let mut hash = [0u8; 8];
    r.read_exact(&mut hash).map_err(io)?;
    let expect = fnv1a64(net.spec_string.as_bytes());
    if u64::from_le_bytes(hash) != expect {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint was written for a different architecture than '{}'",
            net.spec_string
        )));
    }
    let mut count = [0u8; 4];
    r.read_exact(&mut count).map_err(io)?;
    let count = u32::from_le_bytes(count) as usize;

    let mut entries = HashMap::with_capacity(count);
    for _ in 0..count {
        let mut nlen = [0u8; 2];
        r.read_exact(&mut nlen).map_err(io)?;
        let mut name = vec![0u8; u16::from_le_bytes(nlen) as usize];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::format(path, "parameter name is not UTF-8"))?;
        let tensor = read_swtn(&mut r, path)?;
        entries.insert(name, tensor);
    }

    let mut params = net.params_mut();
    if params.len() != entries.len() {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint has {} parameters, network has {}",
            entries.len(),
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let t = entries.remove(&p.name).ok_or_else(|| {
            Error::CheckpointMismatch(format!("checkpoint is missing parameter {}", p.name))
        })?;
        if t.shape() != p.value.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "{}: checkpoint shape {:?} vs network shape {:?}",
                p.name,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use crate::models::{build_swiden, MiniVggSpec, SwiDeNSpec};
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn spec(k: usize) -> SwiDeNSpec {
        let bb = MiniVggSpec {
            stages: vec![(1, 4), (1, 4), (1, 6), (1, 6), (1, 6)],
            fc_dim: 12,
            in_channels: 3,
            input_hw: (32, 32),
            dropout_p: 0.5,
        };
        SwiDeNSpec::new(k, 2, bb, 5)
    }

    #[test]
    fn save_load_save_is_byte_identical_and_preserves_forward() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.swck");
        let p2 = dir.path().join("b.swck");

        let mut net = build_swiden(&spec(2), &mut Rng::new(1)).unwrap();
        checkpoint_save(&net, &p1).unwrap();

        let mut other = build_swiden(&spec(2), &mut Rng::new(999)).unwrap();
        checkpoint_load(&mut other, &p1).unwrap();
        checkpoint_save(&other, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let x = Tensor::normal(&[2, 3, 32, 32], 1.0, &mut Rng::new(7));
        let a = net
            .forward(x.clone(), &[0, 1], Mode::Eval, &mut Rng::new(0))
            .unwrap();
        let b = other
            .forward(x, &[0, 1], Mode::Eval, &mut Rng::new(0))
            .unwrap();
        for (u, v) in a.logits.data().iter().zip(b.logits.data()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn wrong_branch_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k3.swck");
        let net3 = build_swiden(&spec(3), &mut Rng::new(1)).unwrap();
        checkpoint_save(&net3, &path).unwrap();
        let mut net4 = build_swiden(&spec(4), &mut Rng::new(1)).unwrap();
        let err = checkpoint_load(&mut net4, &path);
        assert!(matches!(err, Err(Error::CheckpointMismatch(_))), "{err:?}");
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.swck");
        std::fs::write(&path, b"NOPE").unwrap();
        let mut net = build_swiden(&spec(2), &mut Rng::new(1)).unwrap();
        let err = checkpoint_load(&mut net, &path);
        assert!(matches!(err, Err(Error::Format { .. }) | Err(Error::Io { .. })));
    }
}
