//! Spatial pooling: windowed max and global average.

use super::{Layer, Mode, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{conv_out_size, Tensor};

/// Max over k x k windows with the given stride, no padding. Trailing rows
/// or columns that do not fill a window are dropped. Ties resolve to the
/// first element in row-major window order, so backward routes each output
/// gradient to exactly one input.
pub struct MaxPool2d {
    name: String,
    pub k: usize,
    pub stride: usize,
    cache: Option<PoolCache>,
}

struct PoolCache {
    argmax: Vec<usize>, // flat input index per output element
    in_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(name: impl Into<String>, k: usize, stride: usize) -> MaxPool2d {
        MaxPool2d {
            name: name.into(),
            k,
            stride,
            cache: None,
        }
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: Tensor, mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        if x.shape().len() != 4 {
            return Err(Error::shape(
                "maxpool2d",
                format!("expected [N,C,H,W], got {:?}", x.shape()),
            ));
        }
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        if h < self.k || w < self.k {
            return Err(Error::shape(
                "maxpool2d",
                format!("window {} exceeds input {h}x{w}", self.k),
            ));
        }
        let oh = conv_out_size(h, self.k, self.stride, 0);
        let ow = conv_out_size(w, self.k, self.stride, 0);
        let mut y = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        let src = x.data();
        let dst = y.data_mut();
        for img in 0..n * c {
            let plane = &src[img * h * w..(img + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = (oy * self.stride) * w + ox * self.stride;
                    let mut best = plane[best_idx];
                    for ki in 0..self.k {
                        let iy = oy * self.stride + ki;
                        for kj in 0..self.k {
                            let ix = ox * self.stride + kj;
                            let v = plane[iy * w + ix];
                            if v > best {
                                best = v;
                                best_idx = iy * w + ix;
                            }
                        }
                    }
                    let o = (img * oh + oy) * ow + ox;
                    dst[o] = best;
                    argmax[o] = img * h * w + best_idx;
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(PoolCache {
                argmax,
                in_shape: x.shape().to_vec(),
            });
        }
        Ok(y)
    }

    fn backward(&mut self, dy: Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .expect("maxpool2d backward without forward");
        let mut dx = Tensor::zeros(&cache.in_shape);
        let d = dx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
            d[idx] += g;
        }
        Ok(dx)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Mean over all spatial positions: `[N,C,H,W] -> [N,C]`.
pub struct GlobalAvgPool {
    name: String,
    in_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new(name: impl Into<String>) -> GlobalAvgPool {
        GlobalAvgPool {
            name: name.into(),
            in_shape: None,
        }
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: Tensor, mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        if x.shape().len() != 4 {
            return Err(Error::shape(
                "global_avg_pool",
                format!("expected [N,C,H,W], got {:?}", x.shape()),
            ));
        }
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let area = (h * w) as f64;
        let mut y = Tensor::zeros(&[n, c]);
        for (o, plane) in y.data_mut().iter_mut().zip(x.data().chunks_exact(h * w)) {
            *o = plane.iter().sum::<f64>() / area;
        }
        if mode == Mode::Train {
            self.in_shape = Some(x.shape().to_vec());
        }
        Ok(y)
    }

    fn backward(&mut self, dy: Tensor) -> Result<Tensor> {
        let shape = self
            .in_shape
            .take()
            .expect("global_avg_pool backward without forward");
        let (h, w) = (shape[2], shape[3]);
        let area = (h * w) as f64;
        let mut dx = Tensor::zeros(&shape);
        for (plane, &g) in dx.data_mut().chunks_exact_mut(h * w).zip(dy.data()) {
            let v = g / area;
            plane.iter_mut().for_each(|d| *d = v);
        }
        Ok(dx)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[allow(dead_code)]
fn _unused(_: &Param) {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxpool_known_values_and_routing() {
        let mut rng = Rng::new(1);
        let mut pool = MaxPool2d::new("p", 2, 2);
        #[rustfmt::skip]
        let x = Tensor::from_vec(&[1, 1, 4, 4], vec![
            1.0, 2.0, 5.0, 3.0,
            4.0, 0.0, 1.0, 2.0,
            7.0, 6.0, 0.0, 1.0,
            5.0, 8.0, 2.0, 9.0,
        ]);
        let y = pool.forward(x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[4.0, 5.0, 8.0, 9.0]);
        let dy = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let dx = pool.backward(dy).unwrap();
        #[rustfmt::skip]
        let want = vec![
            0.0, 0.0, 2.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 3.0, 0.0, 4.0,
        ];
        assert_eq!(dx.data(), want.as_slice());
    }

    #[test]
    fn maxpool_ties_take_first_in_window_order() {
        let mut rng = Rng::new(1);
        let mut pool = MaxPool2d::new("p", 2, 2);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![3.0, 3.0, 3.0, 3.0]);
        let _ = pool.forward(x, Mode::Train, &mut rng).unwrap();
        let dx = pool
            .backward(Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]))
            .unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_drops_trailing_odd_row() {
        let mut rng = Rng::new(1);
        let mut pool = MaxPool2d::new("p", 2, 2);
        let x = Tensor::full(&[1, 1, 5, 5], 1.0);
        let y = pool.forward(x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn gap_means_each_plane_and_spreads_gradient() {
        let mut rng = Rng::new(1);
        let mut gap = GlobalAvgPool::new("g");
        let x = Tensor::from_vec(&[1, 2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0]);
        let y = gap.forward(x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.data(), &[2.5, 10.0]);
        let dx = gap
            .backward(Tensor::from_vec(&[1, 2], vec![4.0, 8.0]))
            .unwrap();
        assert_eq!(dx.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }
}
