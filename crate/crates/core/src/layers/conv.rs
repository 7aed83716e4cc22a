//! 2-d convolution lowered to matrix products.
//!
//! Forward gathers each sample into patch rows `[OH*OW, C*kh*kw]`, stacks
//! the batch into one `[N*P, K]` matrix, and multiplies by the transposed
//! filter bank. Every output row depends only on its own sample's row, so a
//! sample's activations are bit-identical whether it is forwarded alone or
//! inside any batch. Backward reuses the cached patch matrix:
//! `dW = dY^T * rows`, `dX = col2im(dY * W)`.

use super::{Layer, Mode, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{col2im_rows, conv_out_size, im2col_rows, Tensor};

pub struct Conv2d {
    name: String,
    pub w: Param, // [F, C, kh, kw]
    pub b: Param, // [F]
    pub stride: usize,
    pub pad: usize,
    cache: Option<Cache>,
}

struct Cache {
    rows: Tensor, // [N*P, K]
    n: usize,
    in_hw: (usize, usize),
}

impl Conv2d {
    /// He-normal weights (fan_in = in_c * k * k), zero bias.
    pub fn new(
        name: impl Into<String>,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Conv2d {
        let name = name.into();
        let w = Tensor::he_normal(&[out_c, in_c, k, k], in_c * k * k, rng);
        Conv2d {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[out_c])),
            stride,
            pad,
            cache: None,
            name,
        }
    }

    pub fn from_params(
        name: impl Into<String>,
        w: Param,
        b: Param,
        stride: usize,
        pad: usize,
    ) -> Conv2d {
        Conv2d {
            name: name.into(),
            w,
            b,
            stride,
            pad,
            cache: None,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.w.value.shape();
        (s[0], s[1], s[2], s[3])
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: Tensor, mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        let (f, c, kh, kw) = self.dims();
        if x.shape().len() != 4 || x.shape()[1] != c {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} vs weight {:?}", x.shape(), self.w.value.shape()),
            ));
        }
        let (n, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        if h + 2 * self.pad < kh || w + 2 * self.pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} exceeds padded input {h}x{w}"),
            ));
        }
        let oh = conv_out_size(h, kh, self.stride, self.pad);
        let ow = conv_out_size(w, kw, self.stride, self.pad);
        let p = oh * ow;
        let k = c * kh * kw;

        let mut rows = Tensor::zeros(&[n * p, k]);
        for i in 0..n {
            im2col_rows(
                &x.data()[i * c * h * w..(i + 1) * c * h * w],
                c,
                h,
                w,
                kh,
                kw,
                self.stride,
                self.pad,
                &mut rows.data_mut()[i * p * k..(i + 1) * p * k],
            );
        }

        let w_flat = self.w.value.clone().reshape(&[f, k]);
        let wt = w_flat.transpose2d()?; // [K, F]
        let mut y_rows = rows.matmul(&wt)?; // [N*P, F]
        {
            let b = self.b.value.data();
            for row in y_rows.data_mut().chunks_exact_mut(f) {
                for (v, &bias) in row.iter_mut().zip(b) {
                    *v += bias;
                }
            }
        }

        // [N*P, F] -> [N, F, OH, OW]
        let mut y = Tensor::zeros(&[n, f, oh, ow]);
        {
            let src = y_rows.data();
            let dst = y.data_mut();
            for i in 0..n {
                for pp in 0..p {
                    let s = &src[(i * p + pp) * f..(i * p + pp + 1) * f];
                    for (ff, &v) in s.iter().enumerate() {
                        dst[(i * f + ff) * p + pp] = v;
                    }
                }
            }
        }

        if mode == Mode::Train {
            self.cache = Some(Cache {
                rows,
                n,
                in_hw: (h, w),
            });
        }
        Ok(y)
    }

    fn backward(&mut self, dy: Tensor) -> Result<Tensor> {
        let cache = self.cache.take().expect("conv2d backward without forward");
        let (f, c, kh, kw) = self.dims();
        let (h, w) = cache.in_hw;
        let n = cache.n;
        let oh = conv_out_size(h, kh, self.stride, self.pad);
        let ow = conv_out_size(w, kw, self.stride, self.pad);
        let p = oh * ow;
        let k = c * kh * kw;
        if dy.shape() != [n, f, oh, ow] {
            return Err(Error::shape(
                "conv2d backward",
                format!("expected [{n},{f},{oh},{ow}], got {:?}", dy.shape()),
            ));
        }

        // [N, F, OH, OW] -> [N*P, F]
        let mut dy_rows = Tensor::zeros(&[n * p, f]);
        {
            let src = dy.data();
            let dst = dy_rows.data_mut();
            for i in 0..n {
                for ff in 0..f {
                    let s = &src[(i * f + ff) * p..(i * f + ff + 1) * p];
                    for (pp, &v) in s.iter().enumerate() {
                        dst[(i * p + pp) * f + ff] = v;
                    }
                }
            }
        }

        let dw = dy_rows.matmul_transa(&cache.rows)?; // [F, K]
        self.w.grad.add_assign(&dw.reshape(&[f, c, kh, kw]));
        {
            let db = self.b.grad.data_mut();
            for row in dy_rows.data().chunks_exact(f) {
                for (g, &v) in db.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }

        let w_flat = self.w.value.clone().reshape(&[f, k]);
        let dx_rows = dy_rows.matmul(&w_flat)?; // [N*P, K]
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        for i in 0..n {
            col2im_rows(
                &dx_rows.data()[i * p * k..(i + 1) * p * k],
                c,
                h,
                w,
                kh,
                kw,
                self.stride,
                self.pad,
                &mut dx.data_mut()[i * c * h * w..(i + 1) * c * h * w],
            );
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle: direct 7-loop convolution.
    fn conv_naive(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (n, c, h, ww) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (f, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        let oh = conv_out_size(h, kh, stride, pad);
        let ow = conv_out_size(ww, kw, stride, pad);
        let mut y = Tensor::zeros(&[n, f, oh, ow]);
        for i in 0..n {
            for ff in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[ff];
                        for cc in 0..c {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy < 0 || iy >= h as isize || ix < 0 || ix >= ww as isize
                                    {
                                        continue;
                                    }
                                    acc += x.data()
                                        [((i * c + cc) * h + iy as usize) * ww + ix as usize]
                                        * w.data()[((ff * c + cc) * kh + ki) * kw + kj];
                                }
                            }
                        }
                        y.data_mut()[((i * f + ff) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = Rng::new(11);
        for (c, f, h, w, k, s, p) in [
            (1, 1, 4, 4, 3, 1, 1),
            (2, 3, 5, 6, 3, 1, 1),
            (3, 2, 7, 7, 3, 2, 1),
            (2, 4, 4, 4, 1, 1, 0),
            (1, 2, 6, 5, 2, 2, 0),
        ] {
            let mut conv = Conv2d::new("c", c, f, k, s, p, &mut rng);
            let x = Tensor::normal(&[2, c, h, w], 1.0, &mut rng);
            let want = conv_naive(&x, &conv.w.value, &conv.b.value, s, p);
            let got = conv.forward(x, Mode::Eval, &mut rng).unwrap();
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "conv mismatch: {a} vs {b}");
            }
        }
    }

    #[test]
    fn batch_rows_are_independent_of_batch_composition() {
        let mut rng = Rng::new(13);
        let mut conv = Conv2d::new("c", 2, 3, 3, 1, 1, &mut rng);
        let batch = Tensor::normal(&[4, 2, 5, 5], 1.0, &mut rng);
        let y_all = conv.forward(batch.clone(), Mode::Eval, &mut rng).unwrap();
        let per = 2 * 5 * 5;
        let out_per = 3 * 5 * 5;
        for i in 0..4 {
            let xi = Tensor::from_vec(
                &[1, 2, 5, 5],
                batch.data()[i * per..(i + 1) * per].to_vec(),
            );
            let yi = conv.forward(xi, Mode::Eval, &mut rng).unwrap();
            for (a, b) in yi
                .data()
                .iter()
                .zip(&y_all.data()[i * out_per..(i + 1) * out_per])
            {
                assert_eq!(a.to_bits(), b.to_bits(), "sample {i} differs in batch");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut rng = Rng::new(1);
        let mut conv = Conv2d::new("c", 3, 2, 3, 1, 1, &mut rng);
        let x = Tensor::zeros(&[1, 2, 5, 5]);
        assert!(conv.forward(x, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn grads_accumulate_across_backward_calls() {
        let mut rng = Rng::new(17);
        let mut conv = Conv2d::new("c", 1, 1, 3, 1, 1, &mut rng);
        let x = Tensor::normal(&[1, 1, 4, 4], 1.0, &mut rng);
        let dy = Tensor::normal(&[1, 1, 4, 4], 1.0, &mut rng);
        let _ = conv.forward(x.clone(), Mode::Train, &mut rng).unwrap();
        let _ = conv.backward(dy.clone()).unwrap();
        let once = conv.w.grad.clone();
        let _ = conv.forward(x, Mode::Train, &mut rng).unwrap();
        let _ = conv.backward(dy).unwrap();
        for (a, b) in conv.w.grad.data().iter().zip(once.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }
}
