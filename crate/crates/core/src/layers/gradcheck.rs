//! Finite-difference verification of every backward pass, plus exact
//! contract checks for the two layers whose backward is intentionally not
//! the derivative of their forward (gradient reversal and routing).
//!
//! The scheme: pick a random cotangent `dy`, define the scalar
//! `J = dot(forward(x), dy)`, and compare the analytic gradients produced
//! by `backward(dy)` against central differences
//! `(J(t + h) - J(t - h)) / 2h` at randomly probed coordinates of the input
//! and of every parameter. Stochastic layers are made repeatable by
//! reseeding the forward rng identically for every probe, so dropout draws
//! the same mask throughout a config.

use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::layers::{Conv2d, Dropout, Fc, Flatten, GlobalAvgPool, Grl, MaxPool2d, Relu, RouterLayer, Sequential};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// |analytic - numeric| / max(1, |analytic|, |numeric|).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0_f64.max(analytic.abs()).max(numeric.abs())
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub layer: String,
    pub configs: usize,
    pub probes: usize,
    pub max_rel_err: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < FD_TOLERANCE
    }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Run `configs` random configurations of one layer type, probing
/// `probes_per_tensor` coordinates of the input and of each parameter.
pub fn fd_check(
    layer_name: &str,
    configs: usize,
    probes_per_tensor: usize,
    seed: u64,
    mut make: impl FnMut(usize, &mut Rng) -> (Box<dyn Layer>, Tensor),
) -> Result<CheckReport> {
    let mut max_rel = 0.0f64;
    let mut probes = 0usize;
    for c in 0..configs {
        let mut rng = Rng::new(seed).derive(&format!("fd-{layer_name}-{c}"));
        let (mut layer, x) = make(c, &mut rng);
        let fwd_seed = rng.next_u64();

        let y = layer.forward(x.clone(), Mode::Train, &mut Rng::new(fwd_seed))?;
        let dy = Tensor::normal(y.shape(), 1.0, &mut rng);
        let dx = layer.backward(dy.clone())?;
        let analytic_param_grads: Vec<Tensor> =
            layer.params().iter().map(|p| p.grad.clone()).collect();

        let measure = |layer: &mut Box<dyn Layer>,
                           perturb: &mut dyn FnMut(&mut Box<dyn Layer>, f64),
                           analytic: f64|
         -> Result<f64> {
            perturb(layer, FD_STEP);
            let yp = layer.forward(x.clone(), Mode::Train, &mut Rng::new(fwd_seed))?;
            perturb(layer, -2.0 * FD_STEP);
            let ym = layer.forward(x.clone(), Mode::Train, &mut Rng::new(fwd_seed))?;
            perturb(layer, FD_STEP);
            let numeric = (dot(&yp, &dy) - dot(&ym, &dy)) / (2.0 * FD_STEP);
            Ok(relative_error(analytic, numeric))
        };

        // Input coordinates. The perturbed input is passed by value, so the
        // closure mutates a scratch copy owned here.
        for _ in 0..probes_per_tensor.min(x.len()) {
            let coord = rng.range(x.len());
            let mut xp = x.clone();
            xp.data_mut()[coord] += FD_STEP;
            let yp = layer.forward(xp.clone(), Mode::Train, &mut Rng::new(fwd_seed))?;
            xp.data_mut()[coord] -= 2.0 * FD_STEP;
            let ym = layer.forward(xp, Mode::Train, &mut Rng::new(fwd_seed))?;
            let numeric = (dot(&yp, &dy) - dot(&ym, &dy)) / (2.0 * FD_STEP);
            let rel = relative_error(dx.data()[coord], numeric);
            max_rel = max_rel.max(rel);
            probes += 1;
        }

        // Parameter coordinates.
        let n_params = layer.params().len();
        for pi in 0..n_params {
            let plen = layer.params()[pi].value.len();
            for _ in 0..probes_per_tensor.min(plen) {
                let coord = rng.range(plen);
                let analytic = analytic_param_grads[pi].data()[coord];
                let rel = measure(
                    &mut layer,
                    &mut |l, d| l.params_mut()[pi].value.data_mut()[coord] += d,
                    analytic,
                )?;
                max_rel = max_rel.max(rel);
                probes += 1;
            }
        }
    }
    Ok(CheckReport {
        layer: layer_name.to_string(),
        configs,
        probes,
        max_rel_err: max_rel,
    })
}

/// Central-difference check of the fused softmax + cross-entropy gradient.
pub fn fd_check_softmax_xent(configs: usize, seed: u64) -> Result<CheckReport> {
    let mut max_rel = 0.0f64;
    let mut probes = 0usize;
    for c in 0..configs {
        let mut rng = Rng::new(seed).derive(&format!("fd-xent-{c}"));
        let n = 1 + rng.range(5);
        let k = 2 + rng.range(8);
        let logits = Tensor::normal(&[n, k], 2.0, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.range(k)).collect();
        let (_, d) = super::softmax_xent(&logits, &labels)?;
        for _ in 0..20 {
            let coord = rng.range(n * k);
            let mut lp = logits.clone();
            lp.data_mut()[coord] += FD_STEP;
            let (jp, _) = super::softmax_xent(&lp, &labels)?;
            lp.data_mut()[coord] -= 2.0 * FD_STEP;
            let (jm, _) = super::softmax_xent(&lp, &labels)?;
            let numeric = (jp - jm) / (2.0 * FD_STEP);
            max_rel = max_rel.max(relative_error(d.data()[coord], numeric));
            probes += 1;
        }
    }
    Ok(CheckReport {
        layer: "softmax_xent".to_string(),
        configs,
        probes,
        max_rel_err: max_rel,
    })
}

// --- per-layer configuration generators ---

fn conv_geometry(c: usize, rng: &mut Rng) -> (usize, usize, usize, usize, usize) {
    // (in_c, out_c, k, stride, pad), cycling through kernel/stride/pad combos
    let k = [1, 2, 3][c % 3];
    let stride = [1, 2][(c / 3) % 2];
    let pad = [0, 1][(c / 6) % 2];
    (1 + rng.range(3), 1 + rng.range(4), k, stride, pad)
}

pub fn make_conv(c: usize, rng: &mut Rng) -> (Box<dyn Layer>, Tensor) {
    let (ic, oc, k, s, p) = conv_geometry(c, rng);
    let h = k.max(3) + rng.range(4);
    let w = k.max(3) + rng.range(4);
    let n = 1 + rng.range(3);
    let layer = Conv2d::new("conv2d", ic, oc, k, s, p, rng);
    let x = Tensor::normal(&[n, ic, h, w], 1.0, rng);
    (Box::new(layer), x)
}

pub fn make_fc(c: usize, rng: &mut Rng) -> (Box<dyn Layer>, Tensor) {
    let din = 1 + (c % 7) + rng.range(5);
    let dout = 1 + rng.range(6);
    let n = 1 + rng.range(4);
    let layer = Fc::new("fc", din, dout, rng);
    let x = Tensor::normal(&[n, din], 1.0, rng);
    (Box::new(layer), x)
}

/// ReLU inputs are pushed away from the kink at zero so the finite
/// difference never straddles it.
pub fn make_relu(c: usize, rng: &mut Rng) -> (Box<dyn Layer>, Tensor) {
    let n = 1 + rng.range(3);
    let d = 2 + (c % 5) + rng.range(6);
    let mut x = Tensor::normal(&[n, d], 1.0, rng);
    for v in x.data_mut() {
        *v += 0.05 * v.signum();
    }
    (Box::new(Relu::new("relu")), x)
}

pub fn make_dropout(c: usize, rng: &mut Rng) -> (Box<dyn Layer>, Tensor) {
    let p = [0.1, 0.25, 0.5, 0.7][c % 4];
    let n = 1 + rng.range(3);
    let d = 3 + rng.range(8);
    let x = Tensor::normal(&[n, d], 1.0, rng);
    (Box::new(Dropout::new("dropout", p)), x)
}

/// Max-pool inputs are redrawn until every pooling window has a clear
/// winner (pairwise gaps above 1e-3), so the argmax cannot flip under the
/// probe step.
pub fn make_maxpool(c: usize, rng: &mut Rng) -> (Box<dyn Layer>, Tensor) {
    let k = [2, 2, 3][c % 3];
    let stride = [2, 1, 2][c % 3];
    let n = 1 + rng.range(2);
    let ch = 1 + rng.range(2);
    let h = k + 2 + rng.range(3);
    let w = k + 2 + rng.range(3);
    let x = loop {
        let x = Tensor::normal(&[n, ch, h, w], 1.0, rng);
        if maxpool_windows_separated(&x, k, stride, 1e-3) {
            break x;
        }
    };
    (Box::new(MaxPool2d::new("maxpool2d", k, stride)), x)
}

fn maxpool_windows_separated(x: &Tensor, k: usize, stride: usize, gap: f64) -> bool {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let oh = crate::tensor::conv_out_size(h, k, stride, 0);
    let ow = crate::tensor::conv_out_size(w, k, stride, 0);
    for img in 0..n * c {
        let plane = &x.data()[img * h * w..(img + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut vals = Vec::with_capacity(k * k);
                for ki in 0..k {
                    for kj in 0..k {
                        vals.push(plane[(oy * stride + ki) * w + ox * stride + kj]);
                    }
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if vals.windows(2).any(|p| p[1] - p[0] < gap) {
                    return false;
                }
            }
        }
    }
    true
}

pub fn make_gap(_c: usize, rng: &mut Rng) -> (Box<dyn Layer>, Tensor) {
    let n = 1 + rng.range(3);
    let c = 1 + rng.range(3);
    let h = 1 + rng.range(5);
    let w = 1 + rng.range(5);
    let x = Tensor::normal(&[n, c, h, w], 1.0, rng);
    (Box::new(GlobalAvgPool::new("global_avg_pool")), x)
}

pub fn make_flatten(_c: usize, rng: &mut Rng) -> (Box<dyn Layer>, Tensor) {
    let n = 1 + rng.range(3);
    let x = Tensor::normal(&[n, 1 + rng.range(3), 2 + rng.range(3), 2 + rng.range(3)], 1.0, rng);
    (Box::new(Flatten::new("flatten")), x)
}

/// Every differentiable layer, checked at the stated tolerance. Returns one
/// report per layer; the caller decides how to present them.
/// Runs the finite-difference suite for every layer type and returns the
/// per-layer reports without judging them.
pub fn layer_reports(configs: usize, probes: usize, seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        fd_check("conv2d", configs, probes, seed, make_conv)?,
        fd_check("maxpool2d", configs, probes, seed, make_maxpool)?,
        fd_check("global_avg_pool", configs, probes, seed, make_gap)?,
        fd_check("fc", configs, probes, seed, make_fc)?,
        fd_check("relu", configs, probes, seed, make_relu)?,
        fd_check("dropout", configs, probes, seed, make_dropout)?,
        fd_check("flatten", configs, probes, seed, make_flatten)?,
        fd_check_softmax_xent(configs, seed)?,
    ])
}

pub fn check_all_layers(configs: usize, probes: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let reports = layer_reports(configs, probes, seed)?;
    for r in &reports {
        if !r.passed() {
            return Err(Error::GradCheck(format!(
                "{}: max relative error {:.3e} exceeds {:.0e} over {} configs",
                r.layer, r.max_rel_err, FD_TOLERANCE, r.configs
            )));
        }
    }
    Ok(reports)
}

// --- exact contracts for the non-derivative backward passes ---

/// Gradient reversal: forward returns its input bit for bit; backward
/// returns exactly -lambda * g for every lambda in the probe set.
pub fn check_grl_contract(seed: u64) -> Result<()> {
    let mut rng = Rng::new(seed).derive("grl-contract");
    for lambda in [0.0, 1.0, 2.0, 3.0, 5.0, 10.0] {
        let mut grl = Grl::new("grl", lambda);
        let x = Tensor::normal(&[4, 7], 3.0, &mut rng);
        let y = grl.forward(x.clone(), Mode::Train, &mut rng)?;
        for (a, b) in y.data().iter().zip(x.data()) {
            if a.to_bits() != b.to_bits() {
                return Err(Error::GradCheck(format!(
                    "grl forward not identity at lambda {lambda}"
                )));
            }
        }
        let g = Tensor::normal(&[4, 7], 2.0, &mut rng);
        let dx = grl.backward(g.clone())?;
        for (a, &gi) in dx.data().iter().zip(g.data()) {
            if a.to_bits() != (-lambda * gi).to_bits() {
                return Err(Error::GradCheck(format!(
                    "grl backward is not -lambda*g at lambda {lambda}"
                )));
            }
        }
    }
    Ok(())
}

fn make_branch(tag: &str, rng: &mut Rng) -> Sequential {
    Sequential::new(
        tag.to_string(),
        vec![
            Box::new(Conv2d::new(format!("{tag}.conv"), 2, 3, 3, 1, 1, rng)) as Box<dyn Layer>,
            Box::new(Relu::new(format!("{tag}.relu"))),
            Box::new(Conv2d::new(format!("{tag}.conv2"), 3, 3, 3, 1, 1, rng)),
        ],
    )
}

/// Routing exclusivity: (a) a batch routed entirely to one branch leaves
/// every other branch's gradients exactly zero, and (b) each sample of a
/// mixed batch gets activations and gradients matching an isolated run of
/// its own branch to within 1e-10.
pub fn check_router_contract(seed: u64) -> Result<()> {
    let tol = 1e-10;
    let mut rng = Rng::new(seed).derive("router-contract");
    let mut router = RouterLayer::new(
        "router",
        vec![make_branch("b0", &mut rng), make_branch("b1", &mut rng)],
    );

    // (a) pure batch: untouched branch keeps bit-exact zero grads.
    let x = Tensor::normal(&[4, 2, 5, 5], 1.0, &mut rng);
    let y = router.forward_routed(x, &[1, 1, 1, 1], Mode::Train, &mut rng)?;
    let dy = Tensor::normal(y.shape(), 1.0, &mut rng);
    let _ = router.backward_routed(dy)?;
    let b0_params = router.branches[0].params().len();
    for (i, p) in router.params().iter().enumerate() {
        let untouched = i < b0_params;
        let any_nonzero = p.grad.data().iter().any(|g| g.to_bits() != 0);
        if untouched && any_nonzero {
            return Err(Error::GradCheck(format!(
                "router: unused branch param {} has nonzero gradient",
                p.name
            )));
        }
        if !untouched && !any_nonzero {
            return Err(Error::GradCheck(format!(
                "router: used branch param {} received no gradient",
                p.name
            )));
        }
    }

    // (b) mixed batch vs isolated runs.
    for p in router.params_mut() {
        p.grad.fill(0.0);
    }
    let styles = [0usize, 1, 1, 0, 1];
    let x = Tensor::normal(&[5, 2, 5, 5], 1.0, &mut rng);
    let y = router.forward_routed(x.clone(), &styles, Mode::Train, &mut rng)?;
    let dy = Tensor::normal(y.shape(), 1.0, &mut rng);
    let dx = router.backward_routed(dy.clone())?;
    let mixed_grads: Vec<Tensor> = router.params().iter().map(|p| p.grad.clone()).collect();

    let in_sz = 2 * 5 * 5;
    let out_sz = y.len() / 5;
    let mut isolated_grads: Vec<Tensor> =
        mixed_grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
    for (i, &s) in styles.iter().enumerate() {
        for p in router.params_mut() {
            p.grad.fill(0.0);
        }
        let xi = Tensor::from_vec(&[1, 2, 5, 5], x.data()[i * in_sz..(i + 1) * in_sz].to_vec());
        let yi = router.forward_routed(xi, &[s], Mode::Train, &mut rng)?;
        for (a, b) in yi.data().iter().zip(&y.data()[i * out_sz..(i + 1) * out_sz]) {
            if (a - b).abs() > tol {
                return Err(Error::GradCheck(format!(
                    "router: sample {i} activation differs from isolated run by {}",
                    (a - b).abs()
                )));
            }
        }
        let dyi = Tensor::from_vec(
            &[1, y.shape()[1], y.shape()[2], y.shape()[3]],
            dy.data()[i * out_sz..(i + 1) * out_sz].to_vec(),
        );
        let dxi = router.backward_routed(dyi)?;
        for (a, b) in dxi.data().iter().zip(&dx.data()[i * in_sz..(i + 1) * in_sz]) {
            if (a - b).abs() > tol {
                return Err(Error::GradCheck(format!(
                    "router: sample {i} input gradient differs from isolated run"
                )));
            }
        }
        for (acc, p) in isolated_grads.iter_mut().zip(router.params()) {
            acc.add_assign(&p.grad);
        }
    }
    for ((mixed, isolated), p) in mixed_grads
        .iter()
        .zip(&isolated_grads)
        .zip(router.params())
    {
        for (a, b) in mixed.data().iter().zip(isolated.data()) {
            if (a - b).abs() > tol {
                return Err(Error::GradCheck(format!(
                    "router: mixed-batch gradient of {} differs from summed isolated runs",
                    p.name
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_layers_pass_fd_at_stated_tolerance() {
        let reports = check_all_layers(20, 12, 2024).unwrap();
        assert_eq!(reports.len(), 8);
        for r in &reports {
            assert!(
                r.max_rel_err < FD_TOLERANCE,
                "{} failed: {:.3e}",
                r.layer,
                r.max_rel_err
            );
            assert!(r.configs >= 20);
        }
    }

    #[test]
    fn grl_contract_holds() {
        check_grl_contract(7).unwrap();
    }

    #[test]
    fn router_contract_holds() {
        check_router_contract(7).unwrap();
    }

    #[test]
    fn relative_error_uses_unit_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-7, 0.0) - 1e-7).abs() < 1e-20);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
