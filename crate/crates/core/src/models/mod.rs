//! Model assembly: the four architectures, built over a shared mini-VGG
//! backbone, plus checkpoint serialization.

mod build;
mod checkpoint;
mod specs;

pub use build::{build_baseline, build_grn, build_swiden, build_switch_net, ART_STYLE_INDEX};
pub use checkpoint::{checkpoint_load, checkpoint_save};
pub use specs::{GrnSpec, MiniVggSpec, SelectorMode, SwiDeNSpec, SwitchNetSpec};

use crate::error::Result;
use crate::layers::{softmax, softmax_xent, Layer, Mode, Param, RouterLayer, Sequential};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum ArchKind {
    Baseline,
    Swiden { k: usize, num_styles: usize },
    Grn { lambda: f64 },
    Switch,
}

/// A trainable network: optional style-routed branches, a shared trunk
/// ending at the feature vector, a label classifier, and (for the
/// reversal architecture) a domain classifier behind a GRL.
pub struct Network {
    pub kind: ArchKind,
    /// Canonical descriptor; its hash guards checkpoint compatibility.
    pub spec_string: String,
    pub router: Option<RouterLayer>,
    pub trunk: Sequential,
    pub label_head: Sequential,
    pub style_head: Option<Sequential>,
    /// Multiplier on the reversed style gradient where it rejoins the trunk.
    /// The style head's own parameters always see the unscaled gradient.
    /// Training schedules fade this in from 0 so the label pathway forms
    /// before the adversarial signal starts erasing style information; 1
    /// leaves the reversal layer's backward untouched. Unused without a
    /// style head.
    pub style_grad_scale: f64,
}

pub struct ForwardOutput {
    pub logits: Tensor,
    pub style_logits: Option<Tensor>,
}

pub struct StepStats {
    pub loss: f64,
    pub label_loss: f64,
    pub style_loss: Option<f64>,
    /// Factor actually applied to the reversed style gradient this step:
    /// `style_grad_scale` times the norm cap. `None` without a style head.
    pub style_scale: Option<f64>,
}

/// `min(1, ‖reference‖₂ / ‖grad‖₂)`; 1 when `grad` is zero.
fn norm_cap(reference: &Tensor, grad: &Tensor) -> f64 {
    let n_ref = reference.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let n_g = grad.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if n_g > n_ref {
        n_ref / n_g
    } else {
        1.0
    }
}

impl Network {
    /// `styles` selects the branch per sample when the network has a
    /// router; it is ignored otherwise (pass an empty slice).
    pub fn forward(
        &mut self,
        x: Tensor,
        styles: &[usize],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<ForwardOutput> {
        let h = match &mut self.router {
            Some(router) => router.forward_routed(x, styles, mode, rng)?,
            None => x,
        };
        let features = self.trunk.forward(h, mode, rng)?;
        let style_logits = match &mut self.style_head {
            Some(head) => Some(head.forward(features.clone(), mode, rng)?),
            None => None,
        };
        let logits = self.label_head.forward(features, mode, rng)?;
        Ok(ForwardOutput {
            logits,
            style_logits,
        })
    }

    /// One forward/backward pass accumulating gradients. The label loss is
    /// always computed; networks with a style head add the style loss, whose
    /// gradient passes through the GRL before rejoining the trunk.
    pub fn train_step(
        &mut self,
        x: Tensor,
        labels: &[usize],
        styles: &[usize],
        rng: &mut Rng,
    ) -> Result<StepStats> {
        let out = self.forward(x, styles, Mode::Train, rng)?;
        let (label_loss, dlogits) = softmax_xent(&out.logits, labels)?;
        let mut dfeatures = self.label_head.backward(dlogits)?;
        let mut style_loss = None;
        let mut style_scale = None;
        if let (Some(head), Some(style_logits)) = (&mut self.style_head, out.style_logits) {
            let (sl, dstyle) = softmax_xent(&style_logits, styles)?;
            let mut ds = head.backward(dstyle)?;
            // The reversed gradient is capped at the label gradient's norm.
            // Cross-entropy is unbounded above, so the trunk could otherwise
            // grow feature magnitudes without limit to maximize the style
            // loss; the cap keeps the adversarial push from ever outweighing
            // the task signal.
            let s = self.style_grad_scale * norm_cap(&dfeatures, &ds);
            if s != 1.0 {
                ds.scale_assign(s);
            }
            dfeatures.add_assign(&ds);
            style_loss = Some(sl);
            style_scale = Some(s);
        }
        let dh = self.trunk.backward(dfeatures)?;
        if let Some(router) = &mut self.router {
            router.backward_routed(dh)?;
        }
        Ok(StepStats {
            loss: label_loss + style_loss.unwrap_or(0.0),
            label_loss,
            style_loss,
            style_scale,
        })
    }

    /// Class probabilities in Eval mode (no caching, no rng consumption).
    pub fn predict_probs(&mut self, x: Tensor, styles: &[usize]) -> Result<Tensor> {
        let mut scratch = Rng::new(0);
        let out = self.forward(x, styles, Mode::Eval, &mut scratch)?;
        softmax(&out.logits)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut ps = match &self.router {
            Some(r) => r.params(),
            None => vec![],
        };
        ps.extend(self.trunk.params());
        ps.extend(self.label_head.params());
        if let Some(h) = &self.style_head {
            ps.extend(h.params());
        }
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = match &mut self.router {
            Some(r) => r.params_mut(),
            None => vec![],
        };
        ps.extend(self.trunk.params_mut());
        ps.extend(self.label_head.params_mut());
        if let Some(h) = &mut self.style_head {
            ps.extend(h.params_mut());
        }
        ps
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn count_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn num_styles(&self) -> usize {
        match &self.router {
            Some(r) => r.num_branches(),
            None => 1,
        }
    }
}

#[allow(dead_code)]
fn _layer_trait_in_scope(_: &dyn Layer) {}
