//! Dense f64 tensors in row-major order, plus the handful of kernels the
//! layers need: elementwise arithmetic, three matmul variants, im2col and
//! its adjoint col2im, reductions, and a small binary serialization format.
//!
//! The matmul kernels are written so LLVM can vectorize the inner loop
//! without reassociating floating point: `matmul` runs i-k-j with a fused
//! `c[j] += a_ik * b[k][j]` sweep, `matmul_transa` runs the same sweep over
//! the shared leading index, and `matmul_transb` transposes `b` once and
//! reuses `matmul`. Results are therefore deterministic across runs and
//! independent of batch composition.

use crate::error::{Error, Result};
use crate::rng::Rng;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Gaussian entries with the given sigma, drawn in row-major order.
    pub fn normal(shape: &[usize], sigma: f64, rng: &mut Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(sigma * rng.normal());
        }
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// He initialization: sigma = sqrt(2 / fan_in).
    pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
        Tensor::normal(shape, (2.0 / fan_in as f64).sqrt(), rng)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret with a new shape of equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "cannot reshape {:?} into {:?}",
            self.shape,
            shape
        );
        self.shape = shape.to_vec();
        self
    }

    // --- elementwise ---

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip(other, "mul", |a, b| a * b)
    }

    fn zip(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(
            self.shape, other.shape,
            "{op}: shapes {:?} and {:?} differ",
            self.shape, other.shape
        );
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign: shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|a| *a = value);
    }

    // --- reductions ---

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &a| m.max(a.abs()))
    }

    /// Index of the largest element; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    // --- matmul family (2-d only) ---

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::shape(op, format!("expected rank 2, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// `self[m,k] * other[k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{m}x{k} * {k2}x{n}"),
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for kk in 0..k {
                let a = self.data[i * k + kk];
                let brow = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor::from_vec(&[m, n], out))
    }

    /// `transpose(self)[m,l] * other[l,n] -> [m,n]` where self is `[l,m]`.
    /// Accumulates over the shared leading index, so the inner loop stays
    /// contiguous in both operands.
    pub fn matmul_transa(&self, other: &Tensor) -> Result<Tensor> {
        let (l, m) = self.dims2("matmul_transa")?;
        let (l2, n) = other.dims2("matmul_transa")?;
        if l != l2 {
            return Err(Error::shape(
                "matmul_transa",
                format!("({l}x{m})^T * {l2}x{n}"),
            ));
        }
        let mut out = vec![0.0; m * n];
        for ll in 0..l {
            let arow = &self.data[ll * m..(ll + 1) * m];
            let brow = &other.data[ll * n..(ll + 1) * n];
            for (i, &a) in arow.iter().enumerate() {
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor::from_vec(&[m, n], out))
    }

    /// `self[m,k] * transpose(other)[k,n] -> [m,n]` where other is `[n,k]`.
    pub fn matmul_transb(&self, other: &Tensor) -> Result<Tensor> {
        let bt = other.transpose2d()?;
        self.matmul(&bt)
    }

    pub fn transpose2d(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose2d")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor::from_vec(&[c, r], out))
    }
}

/// Output spatial size of a convolution or pooling window sweep:
/// floor((size + 2*pad - k) / stride) + 1.
pub fn conv_out_size(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Lower one image `[C,H,W]` to patch columns `[C*kh*kw, OH*OW]`.
/// Row index is `(c*kh + ki)*kw + kj`; column index is `oy*OW + ox`;
/// out-of-bounds taps (from zero padding) contribute zero.
pub fn im2col(
    x: &Tensor,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    if x.shape().len() != 3 {
        return Err(Error::shape("im2col", format!("expected [C,H,W], got {:?}", x.shape())));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let oh = conv_out_size(h, kh, stride, pad);
    let ow = conv_out_size(w, kw, stride, pad);
    let mut cols = Tensor::zeros(&[c * kh * kw, oh * ow]);
    im2col_rows_into(
        x.data(),
        c,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        RowsOrPatches::Patches,
        cols.data_mut(),
    );
    Ok(cols)
}

/// Adjoint of [`im2col`]: scatter-add columns `[C*kh*kw, OH*OW]` back to an
/// image `[C,H,W]`. For every x and y of matching geometry,
/// `dot(im2col(x), y) == dot(x, col2im(y))`.
pub fn col2im(
    cols: &Tensor,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let oh = conv_out_size(h, kh, stride, pad);
    let ow = conv_out_size(w, kw, stride, pad);
    if cols.shape() != [c * kh * kw, oh * ow] {
        return Err(Error::shape(
            "col2im",
            format!(
                "expected [{}, {}], got {:?}",
                c * kh * kw,
                oh * ow,
                cols.shape()
            ),
        ));
    }
    let mut img = Tensor::zeros(&[c, h, w]);
    let data = cols.data();
    for cc in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (cc * kh + ki) * kw + kj;
                let base = row * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        img.data[(cc * h + iy as usize) * w + ix as usize] +=
                            data[base + oy * ow + ox];
                    }
                }
            }
        }
    }
    Ok(img)
}

enum RowsOrPatches {
    /// `[P, K]`: one row per output position. Used by the conv layer so the
    /// batched product is a plain row-major matmul.
    Rows,
    /// `[K, P]`: one row per kernel tap, the published lowering layout.
    Patches,
}

/// Shared gather for both im2col layouts. `out` must be zeroed, length K*P.
#[allow(clippy::too_many_arguments)]
fn im2col_rows_into(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    layout: RowsOrPatches,
    out: &mut [f64],
) {
    let oh = conv_out_size(h, kh, stride, pad);
    let ow = conv_out_size(w, kw, stride, pad);
    let k = c * kh * kw;
    let p = oh * ow;
    debug_assert_eq!(out.len(), k * p);
    for cc in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let tap = (cc * kh + ki) * kw + kj;
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = &x[(cc * h + iy as usize) * w..(cc * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let v = xrow[ix as usize];
                        let pos = oy * ow + ox;
                        match layout {
                            RowsOrPatches::Rows => out[pos * k + tap] = v,
                            RowsOrPatches::Patches => out[tap * p + pos] = v,
                        }
                    }
                }
            }
        }
    }
}

/// Lower one image to `[OH*OW, C*kh*kw]` (transpose of [`im2col`]), writing
/// into a caller-provided zeroed slice. The conv layer stacks these blocks
/// per sample and multiplies once per batch.
#[allow(clippy::too_many_arguments)]
pub fn im2col_rows(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out: &mut [f64],
) {
    im2col_rows_into(x, c, h, w, kh, kw, stride, pad, RowsOrPatches::Rows, out);
}

/// Scatter-add of the rows layout `[OH*OW, C*kh*kw]` back into an image.
#[allow(clippy::too_many_arguments)]
pub fn col2im_rows(
    rows: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    img: &mut [f64],
) {
    let oh = conv_out_size(h, kh, stride, pad);
    let ow = conv_out_size(w, kw, stride, pad);
    let k = c * kh * kw;
    debug_assert_eq!(rows.len(), oh * ow * k);
    debug_assert_eq!(img.len(), c * h * w);
    for oy in 0..oh {
        for ox in 0..ow {
            let rrow = &rows[(oy * ow + ox) * k..(oy * ow + ox + 1) * k];
            for cc in 0..c {
                for ki in 0..kh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kj in 0..kw {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        img[(cc * h + iy as usize) * w + ix as usize] +=
                            rrow[(cc * kh + ki) * kw + kj];
                    }
                }
            }
        }
    }
}

// --- serialization: SWTN, a little-endian binary tensor format ---
//
//   bytes 0..4   magic "SWTN"
//   byte  4      format version, currently 1
//   byte  5      rank (number of dimensions)
//   then rank *  u32 little-endian dimension sizes
//   then         product(dims) * f64 little-endian values, row-major

const SWTN_MAGIC: &[u8; 4] = b"SWTN";
const SWTN_VERSION: u8 = 1;

pub fn write_swtn<W: Write>(w: &mut W, t: &Tensor) -> std::io::Result<()> {
    w.write_all(SWTN_MAGIC)?;
    w.write_all(&[SWTN_VERSION, t.shape.len() as u8])?;
    for &d in &t.shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_swtn<R: Read>(r: &mut R, origin: &Path) -> Result<Tensor> {
    let bad = |msg: &str| Error::format(origin, msg);
    // Hitting EOF inside a record means the file is malformed, not that the
    // read itself failed.
    let read_err = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(origin, "truncated tensor record")
        } else {
            Error::io(origin, e)
        }
    };
    let mut head = [0u8; 6];
    r.read_exact(&mut head).map_err(read_err)?;
    if &head[0..4] != SWTN_MAGIC {
        return Err(bad("missing SWTN magic"));
    }
    if head[4] != SWTN_VERSION {
        return Err(bad(&format!("unsupported SWTN version {}", head[4])));
    }
    let rank = head[5] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(read_err)?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b).map_err(read_err)?;
        data.push(f64::from_le_bytes(b));
    }
    Ok(Tensor::from_vec(&shape, data))
}

pub fn save_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    write_swtn(&mut f, t).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let mut f = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    read_swtn(&mut f, path)
}
