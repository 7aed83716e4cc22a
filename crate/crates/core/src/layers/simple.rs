//! Parameter-free layers: ReLU, inverted dropout, flatten, and the
//! gradient reversal layer.

use super::{Layer, Mode, Param};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub struct Relu {
    name: String,
    // 1.0 where the input was positive. The subgradient at exactly 0 is 0.
    mask: Option<Vec<f64>>,
}

impl Relu {
    pub fn new(name: impl Into<String>) -> Relu {
        Relu {
            name: name.into(),
            mask: None,
        }
    }
}

impl Layer for Relu {
    fn forward(&mut self, mut x: Tensor, mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        if mode == Mode::Train {
            self.mask = Some(
                x.data()
                    .iter()
                    .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
        for v in x.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(x)
    }

    fn backward(&mut self, mut dy: Tensor) -> Result<Tensor> {
        let mask = self.mask.take().expect("relu backward without forward");
        for (g, m) in dy.data_mut().iter_mut().zip(mask) {
            *g *= m;
        }
        Ok(dy)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Inverted dropout. In Train mode each element draws one uniform in
/// row-major order and is zeroed when `u < p`, otherwise scaled by
/// `1 / (1 - p)`, so Eval mode is the identity with no rescaling.
pub struct Dropout {
    name: String,
    pub p: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(name: impl Into<String>, p: f64) -> Dropout {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0,1)");
        Dropout {
            name: name.into(),
            p,
            mask: None,
        }
    }
}

impl Layer for Dropout {
    fn forward(&mut self, mut x: Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        if mode == Mode::Eval {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.next_f64() < self.p { 0.0 } else { keep })
            .collect();
        for (v, &m) in x.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(x)
    }

    fn backward(&mut self, mut dy: Tensor) -> Result<Tensor> {
        let mask = self.mask.take().expect("dropout backward without forward");
        for (g, m) in dy.data_mut().iter_mut().zip(mask) {
            *g *= m;
        }
        Ok(dy)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Collapse `[N, ...]` to `[N, rest]`. Backward restores the shape.
pub struct Flatten {
    name: String,
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new(name: impl Into<String>) -> Flatten {
        Flatten {
            name: name.into(),
            in_shape: None,
        }
    }
}

impl Layer for Flatten {
    fn forward(&mut self, x: Tensor, mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        let shape = x.shape().to_vec();
        let n = shape[0];
        let rest: usize = shape[1..].iter().product();
        if mode == Mode::Train {
            self.in_shape = Some(shape);
        }
        Ok(x.reshape(&[n, rest]))
    }

    fn backward(&mut self, dy: Tensor) -> Result<Tensor> {
        let shape = self
            .in_shape
            .take()
            .expect("flatten backward without forward");
        Ok(dy.reshape(&shape))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Gradient reversal: the forward pass is the identity, the backward pass
/// multiplies the incoming gradient by `-lambda`. Training the downstream
/// classifier to minimize its loss therefore pushes the upstream features
/// toward maximizing it.
pub struct Grl {
    name: String,
    pub lambda: f64,
}

impl Grl {
    pub fn new(name: impl Into<String>, lambda: f64) -> Grl {
        Grl {
            name: name.into(),
            lambda,
        }
    }
}

impl Layer for Grl {
    fn forward(&mut self, x: Tensor, _mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        Ok(x)
    }

    fn backward(&mut self, mut dy: Tensor) -> Result<Tensor> {
        let s = -self.lambda;
        for g in dy.data_mut() {
            *g *= s;
        }
        Ok(dy)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[allow(dead_code)]
fn _assert_layer_object_safe(_: &dyn Layer, _: &Param) {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_zeroes_negatives_and_their_gradients() {
        let mut rng = Rng::new(1);
        let mut relu = Relu::new("r");
        let x = Tensor::from_vec(&[2, 3], vec![-1.0, 0.0, 2.0, -0.5, 3.0, -4.0]);
        let y = relu.forward(x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let dy = Tensor::from_vec(&[2, 3], vec![1.0; 6]);
        let dx = relu.backward(dy).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dropout_mask_follows_documented_draw_rule() {
        // Replaying the same rng stream by hand must reproduce the mask.
        let p = 0.5;
        let mut oracle = Rng::new(123);
        let expect: Vec<f64> = (0..8)
            .map(|_| if oracle.next_f64() < p { 0.0 } else { 2.0 })
            .collect();
        let mut rng = Rng::new(123);
        let mut drop = Dropout::new("d", p);
        let x = Tensor::from_vec(&[2, 4], vec![1.0; 8]);
        let y = drop.forward(x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.data(), expect.as_slice());
    }

    #[test]
    fn dropout_eval_is_identity_and_draws_nothing() {
        let mut rng = Rng::new(9);
        let mut drop = Dropout::new("d", 0.5);
        let x = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]);
        let y = drop.forward(x.clone(), Mode::Eval, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
        let mut untouched = Rng::new(9);
        assert_eq!(rng.next_u64(), untouched.next_u64());
    }

    #[test]
    fn dropout_backward_reuses_forward_mask() {
        let mut rng = Rng::new(7);
        let mut drop = Dropout::new("d", 0.25);
        let x = Tensor::from_vec(&[8], vec![1.0; 8]);
        let y = drop.forward(x, Mode::Train, &mut rng).unwrap();
        let dy = Tensor::from_vec(&[8], vec![1.0; 8]);
        let dx = drop.backward(dy).unwrap();
        assert_eq!(dx.data(), y.data());
    }

    #[test]
    fn grl_forward_is_bit_identical() {
        let mut rng = Rng::new(3);
        let x = Tensor::normal(&[3, 5], 1.0, &mut rng);
        for lambda in [0.0, 1.0, 2.0, 10.0] {
            let mut grl = Grl::new("g", lambda);
            let y = grl.forward(x.clone(), Mode::Train, &mut rng).unwrap();
            for (a, b) in y.data().iter().zip(x.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn grl_backward_is_exactly_minus_lambda() {
        let mut rng = Rng::new(4);
        let dy = Tensor::normal(&[4, 4], 1.0, &mut rng);
        for lambda in [0.0, 1.0, 2.0, 3.0, 5.0, 10.0] {
            let mut grl = Grl::new("g", lambda);
            let _ = grl
                .forward(Tensor::zeros(&[4, 4]), Mode::Train, &mut rng)
                .unwrap();
            let dx = grl.backward(dy.clone()).unwrap();
            for (g, d) in dx.data().iter().zip(dy.data()) {
                assert_eq!(g.to_bits(), (-lambda * d).to_bits());
            }
        }
    }

    #[test]
    fn flatten_roundtrips_shape() {
        let mut rng = Rng::new(5);
        let mut fl = Flatten::new("f");
        let x = Tensor::normal(&[2, 3, 4, 5], 1.0, &mut rng);
        let y = fl.forward(x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.shape(), &[2, 60]);
        let dx = fl.backward(Tensor::zeros(&[2, 60])).unwrap();
        assert_eq!(dx.shape(), &[2, 3, 4, 5]);
    }
}
