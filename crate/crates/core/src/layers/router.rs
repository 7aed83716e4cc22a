//! Style-switched routing over parallel branches.
//!
//! Each sample in a batch carries a style index that selects which branch
//! processes it. Forward gathers every branch's samples into a sub-batch
//! (preserving their original relative order), runs the branch once, and
//! scatters the outputs back to the original positions. Backward replays
//! the same assignment, so gradient flows only into the branch a sample
//! actually used; the other branches' parameter gradients are untouched
//! (exactly zero if they started zero).
//!
//! When the whole batch selects one branch, that branch sees the input
//! tensor unchanged, which makes a single-branch router bit-identical to
//! running the branch inline.

use super::{Layer, Mode, Param, Sequential};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub struct RouterLayer {
    name: String,
    pub branches: Vec<Sequential>,
    cache: Option<RouteCache>,
}

struct RouteCache {
    assignment: Vec<Vec<usize>>, // branch -> original sample indices, ascending
    in_shape: Vec<usize>,
    pure_branch: Option<usize>,
}

impl RouterLayer {
    pub fn new(name: impl Into<String>, branches: Vec<Sequential>) -> RouterLayer {
        assert!(!branches.is_empty(), "router needs at least one branch");
        RouterLayer {
            name: name.into(),
            branches,
            cache: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    fn validate(&self, n: usize, styles: &[usize]) -> Result<()> {
        if styles.len() != n {
            return Err(Error::Routing(format!(
                "{} styles for a batch of {n}",
                styles.len()
            )));
        }
        for (i, &s) in styles.iter().enumerate() {
            if s >= self.branches.len() {
                return Err(Error::Routing(format!(
                    "sample {i} selects branch {s}, but only {} branches exist",
                    self.branches.len()
                )));
            }
        }
        Ok(())
    }

    pub fn forward_routed(
        &mut self,
        x: Tensor,
        styles: &[usize],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        let n = x.shape()[0];
        self.validate(n, styles)?;
        let in_shape = x.shape().to_vec();

        if let Some(&first) = styles.first() {
            if styles.iter().all(|&s| s == first) {
                let y = self.branches[first].forward(x, mode, rng)?;
                if mode == Mode::Train {
                    self.cache = Some(RouteCache {
                        assignment: vec![],
                        in_shape,
                        pure_branch: Some(first),
                    });
                }
                return Ok(y);
            }
        }

        let mut assignment: Vec<Vec<usize>> = vec![vec![]; self.branches.len()];
        for (i, &s) in styles.iter().enumerate() {
            assignment[s].push(i);
        }

        let sample = x.len() / n;
        let mut out: Option<Tensor> = None;
        let mut out_sample = 0usize;
        for (b, idxs) in assignment.iter().enumerate() {
            if idxs.is_empty() {
                continue;
            }
            let mut sub = Tensor::zeros(&sub_shape(&in_shape, idxs.len()));
            for (row, &i) in idxs.iter().enumerate() {
                sub.data_mut()[row * sample..(row + 1) * sample]
                    .copy_from_slice(&x.data()[i * sample..(i + 1) * sample]);
            }
            let yb = self.branches[b].forward(sub, mode, rng)?;
            let ys = yb.len() / idxs.len();
            let out = match &mut out {
                Some(t) => {
                    if t.len() / n != ys {
                        return Err(Error::Routing(format!(
                            "branch {b} output size {ys} disagrees with {}",
                            t.len() / n
                        )));
                    }
                    t
                }
                None => {
                    out_sample = ys;
                    out.insert(Tensor::zeros(&sub_shape(yb.shape(), n)))
                }
            };
            for (row, &i) in idxs.iter().enumerate() {
                out.data_mut()[i * out_sample..(i + 1) * out_sample]
                    .copy_from_slice(&yb.data()[row * ys..(row + 1) * ys]);
            }
        }
        let out = out.expect("non-empty batch routed somewhere");
        if mode == Mode::Train {
            self.cache = Some(RouteCache {
                assignment,
                in_shape,
                pure_branch: None,
            });
        }
        Ok(out)
    }

    pub fn backward_routed(&mut self, dy: Tensor) -> Result<Tensor> {
        let cache = self.cache.take().expect("router backward without forward");
        if let Some(b) = cache.pure_branch {
            return self.branches[b].backward(dy);
        }
        let n = cache.in_shape[0];
        let dys = dy.len() / n;
        let in_sample: usize = cache.in_shape[1..].iter().product();
        let mut dx = Tensor::zeros(&cache.in_shape);
        for (b, idxs) in cache.assignment.iter().enumerate() {
            if idxs.is_empty() {
                continue;
            }
            let mut sub = Tensor::zeros(&sub_shape(dy.shape(), idxs.len()));
            for (row, &i) in idxs.iter().enumerate() {
                sub.data_mut()[row * dys..(row + 1) * dys]
                    .copy_from_slice(&dy.data()[i * dys..(i + 1) * dys]);
            }
            let dxb = self.branches[b].backward(sub)?;
            for (row, &i) in idxs.iter().enumerate() {
                dx.data_mut()[i * in_sample..(i + 1) * in_sample]
                    .copy_from_slice(&dxb.data()[row * in_sample..(row + 1) * in_sample]);
            }
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.branches.iter().flat_map(|b| b.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.branches
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .collect()
    }
}

fn sub_shape(shape: &[usize], n: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s[0] = n;
    s
}
