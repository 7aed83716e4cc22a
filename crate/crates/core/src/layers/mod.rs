//! Layer modules with hand-written backward passes.
//!
//! Every layer follows the same contract: `forward` in `Train` mode caches
//! whatever `backward` needs, `backward` consumes that cache and returns the
//! input gradient while accumulating (`+=`) into parameter gradients.
//! `Eval` mode caches nothing and must not draw from the rng, so evaluation
//! never perturbs a training stream.

mod conv;
mod fc;
pub mod gradcheck;
mod loss;
mod pool;
mod router;
mod simple;

pub use conv::Conv2d;
pub use fc::Fc;
pub use loss::{softmax, softmax_xent};
pub use pool::{GlobalAvgPool, MaxPool2d};
pub use router::RouterLayer;
pub use simple::{Dropout, Flatten, Grl, Relu};

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor with its gradient accumulator, momentum buffer, and a
/// per-parameter learning-rate multiplier (used to train one branch faster
/// than the rest). All three tensors always share one shape.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum_buf: Tensor,
    pub lr_scale: f64,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Param {
        let grad = Tensor::zeros(value.shape());
        let momentum_buf = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
            momentum_buf,
            lr_scale: 1.0,
        }
    }
}

pub trait Layer {
    fn forward(&mut self, x: Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor>;

    /// Propagate the output gradient; requires a preceding Train forward.
    fn backward(&mut self, dy: Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Param> {
        vec![]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![]
    }

    fn name(&self) -> &str;
}

/// Layers applied in order. Backward replays them in reverse.
pub struct Sequential {
    name: String,
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(name: impl Into<String>, layers: Vec<Box<dyn Layer>>) -> Sequential {
        Sequential {
            name: name.into(),
            layers,
        }
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let mut h = x;
        for layer in &mut self.layers {
            h = layer.forward(h, mode, rng)?;
        }
        Ok(h)
    }

    fn backward(&mut self, dy: Tensor) -> Result<Tensor> {
        let mut g = dy;
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_chains_forward_and_reverses_backward() {
        let mut rng = Rng::new(1);
        let mut seq = Sequential::new(
            "seq",
            vec![Box::new(Relu::new("r1")), Box::new(Grl::new("g", 3.0))],
        );
        let x = Tensor::from_vec(&[1, 4], vec![-1.0, 2.0, -3.0, 4.0]);
        let y = seq.forward(x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 0.0, 4.0]);
        let dx = seq
            .backward(Tensor::from_vec(&[1, 4], vec![1.0; 4]))
            .unwrap();
        // Grl multiplies by -3, then relu masks the negatives.
        assert_eq!(dx.data(), &[0.0, -3.0, 0.0, -3.0]);
    }

    #[test]
    fn params_are_collected_in_layer_order() {
        let mut rng = Rng::new(2);
        let seq = Sequential::new(
            "s",
            vec![
                Box::new(Fc::new("a", 4, 3, &mut rng)),
                Box::new(Relu::new("r")),
                Box::new(Fc::new("b", 3, 2, &mut rng)),
            ],
        );
        let names: Vec<&str> = seq.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["a.w", "a.b", "b.w", "b.b"]);
    }
}
