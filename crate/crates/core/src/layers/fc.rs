//! Fully connected layer: `y = x W^T + b` with `W: [out, in]`.

use super::{Layer, Mode, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub struct Fc {
    name: String,
    pub w: Param, // [out, in]
    pub b: Param, // [out]
    cache_x: Option<Tensor>,
}

impl Fc {
    /// He-normal weights (fan_in = in_dim), zero bias.
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Fc {
        let name = name.into();
        let w = Tensor::he_normal(&[out_dim, in_dim], in_dim, rng);
        Fc {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[out_dim])),
            cache_x: None,
            name,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.shape()[0]
    }
}

impl Layer for Fc {
    fn forward(&mut self, x: Tensor, mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[1] != self.in_dim() {
            return Err(Error::shape(
                "fc",
                format!("input {:?} vs weight {:?}", x.shape(), self.w.value.shape()),
            ));
        }
        let mut y = x.matmul_transb(&self.w.value)?; // [N, out]
        let out = self.out_dim();
        let b = self.b.value.data();
        for row in y.data_mut().chunks_exact_mut(out) {
            for (v, &bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
        }
        if mode == Mode::Train {
            self.cache_x = Some(x);
        }
        Ok(y)
    }

    fn backward(&mut self, dy: Tensor) -> Result<Tensor> {
        let x = self.cache_x.take().expect("fc backward without forward");
        let dw = dy.matmul_transa(&x)?; // [out, in]
        self.w.grad.add_assign(&dw);
        let out = self.out_dim();
        {
            let db = self.b.grad.data_mut();
            for row in dy.data().chunks_exact(out) {
                for (g, &v) in db.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        dy.matmul(&self.w.value) // [N, in]
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

    #[test]
    fn forward_matches_hand_computation() {
        let mut rng = Rng::new(1);
        let mut fc = Fc::new("f", 3, 2, &mut rng);
        fc.w.value = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, -1.0, 2.0, 1.0, 0.5]);
        fc.b.value = Tensor::from_vec(&[2], vec![0.1, -0.2]);
        let x = Tensor::from_vec(&[1, 3], vec![2.0, 3.0, 4.0]);
        let y = fc.forward(x, Mode::Eval, &mut rng).unwrap();
        // row0: 2 - 4 + 0.1 = -1.9; row1: 4 + 3 + 2 - 0.2 = 8.8
        assert!((y.data()[0] - -1.9).abs() < 1e-12);
        assert!((y.data()[1] - 8.8).abs() < 1e-12);
    }

    #[test]
    fn backward_shapes_and_bias_grad() {
        let mut rng = Rng::new(2);
        let mut fc = Fc::new("f", 4, 3, &mut rng);
        let x = Tensor::normal(&[5, 4], 1.0, &mut rng);
        let _ = fc.forward(x, Mode::Train, &mut rng).unwrap();
        let dy = Tensor::full(&[5, 3], 1.0);
        let dx = fc.backward(dy).unwrap();
        assert_eq!(dx.shape(), &[5, 4]);
        // db sums dy over the batch: all 5s.
        for &g in fc.b.grad.data() {
            assert!((g - 5.0).abs() < 1e-12);
        }
        assert_eq!(fc.w.grad.shape(), &[3, 4]);
    }
}
