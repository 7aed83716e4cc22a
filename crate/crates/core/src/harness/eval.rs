//! Five-crop evaluation and shared prediction plumbing.
//!
//! Test images are rescaled, the four corner crops plus the center crop are
//! classified, and the per-crop probability vectors are mean-pooled into one
//! prediction. Evaluation never mutates parameters and never consumes the
//! training rng streams.

use crate::data::{five_crop, rescale_smallest_side, Dataset};
use crate::error::{Error, Result};
use crate::harness::metrics::{counts_from_rows, overall_from_style_counts, Counts, PredRow};
use crate::models::SelectorMode;
use crate::models::Network;
use crate::tensor::Tensor;

/// What the network under evaluation predicts: object classes, or the
/// style itself (the Switch's task).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    Class,
    Style,
}

pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let k = probs.shape()[1];
    let data = probs.data();
    (0..probs.shape()[0])
        .map(|row| {
            let r = &data[row * k..(row + 1) * k];
            let mut best = 0;
            for (i, v) in r.iter().enumerate() {
                if *v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Branch assignment for a batch. Routerless networks take no styles; a
/// single-branch router routes everything to branch 0; otherwise oracle mode
/// uses the true style labels and predicted mode asks the Switch.
pub fn routing_styles(
    net: &Network,
    selector: SelectorMode,
    switch: Option<&mut Network>,
    x: &Tensor,
    true_styles: &[usize],
) -> Result<Vec<usize>> {
    if net.router.is_none() {
        return Ok(Vec::new());
    }
    if net.num_styles() == 1 {
        return Ok(vec![0; true_styles.len()]);
    }
    match selector {
        SelectorMode::Oracle => Ok(true_styles.to_vec()),
        SelectorMode::Predicted => {
            let switch = switch.ok_or_else(|| {
                Error::InvalidConfig("predicted routing requires a Switch network".into())
            })?;
            let probs = switch.predict_probs(x.clone(), &[])?;
            Ok(argmax_rows(&probs))
        }
    }
}

/// Pixels are stored in [0,1]; every batch is shifted to be roughly
/// zero-mean before it reaches a network. He-initialized layers assume
/// centered inputs, and training from scratch diverges without this.
pub const INPUT_SHIFT: f64 = 0.5;

/// Stacks `[3, c, c]` crops into one centered `[n, 3, c, c]` batch.
pub fn stack_crops(crops: &[Tensor]) -> Tensor {
    let per = crops[0].len();
    let mut data = Vec::with_capacity(crops.len() * per);
    for c in crops {
        data.extend(c.data().iter().map(|v| v - INPUT_SHIFT));
    }
    let s = crops[0].shape();
    Tensor::from_vec(&[crops.len(), s[0], s[1], s[2]], data)
}

pub struct EvalOutcome {
    pub rows: Vec<PredRow>,
    pub style_counts: Counts,
    pub class_counts: Counts,
    pub overall_acc: f64,
}

/// Five-crop pooled evaluation over `indices`: the four corner crops and the
/// geometric center crop, with per-crop probabilities mean-pooled. Bounding
/// boxes steer training crops only, never test crops. `switch` is consulted
/// only when `selector` is predicted and the network routes.
pub fn evaluate(
    net: &mut Network,
    selector: SelectorMode,
    mut switch: Option<&mut Network>,
    ds: &Dataset,
    indices: &[usize],
    rescale: usize,
    crop: usize,
    target: EvalTarget,
) -> Result<EvalOutcome> {
    let mut rows = Vec::with_capacity(indices.len());
    for &idx in indices {
        let img = &ds.images[idx];
        let rescaled = rescale_smallest_side(img, rescale)?;
        let crops = five_crop(&rescaled.pixels, crop)?;
        let x = stack_crops(&crops);
        let styles = routing_styles(net, selector, switch.as_deref_mut(), &x, &[img.style_id; 5])?;
        let probs = net.predict_probs(x, &styles)?;
        let pred = crate::data::pool_five_crop_predictions(&probs)?;
        let true_class = match target {
            EvalTarget::Class => img.class_id,
            EvalTarget::Style => img.style_id,
        };
        rows.push(PredRow {
            index: idx,
            true_class,
            true_style: img.style_id,
            pred_class: pred,
        });
    }
    let num_groups = match target {
        EvalTarget::Class => ds.num_classes(),
        EvalTarget::Style => ds.num_styles,
    };
    let (style_counts, class_counts) = counts_from_rows(&rows, ds.num_styles, num_groups);
    let overall_acc = overall_from_style_counts(&style_counts);
    Ok(EvalOutcome {
        rows,
        style_counts,
        class_counts,
        overall_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::gen_synthetic;
    use crate::models::{build_baseline, build_swiden};
    use crate::models::{MiniVggSpec, SwiDeNSpec};
    use crate::rng::Rng;

    fn small_backbone(crop: usize) -> MiniVggSpec {
        MiniVggSpec {
            input_hw: (crop, crop),
            ..MiniVggSpec::default()
        }
    }

    #[test]
    fn evaluate_counts_totals_and_leaves_params_untouched() {
        let ds = gen_synthetic(5, 3, 3, 40).unwrap();
        let mut rng = Rng::new(1).derive("init");
        let mut net = build_baseline(&small_backbone(32), 3, &mut rng).unwrap();
        let before: Vec<u64> = net
            .params()
            .iter()
            .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
            .collect();
        let indices: Vec<usize> = (0..ds.images.len()).collect();
        let out = evaluate(
            &mut net,
            SelectorMode::Oracle,
            None,
            &ds,
            &indices,
            36,
            32,
            EvalTarget::Class,
        )
        .unwrap();
        assert_eq!(out.rows.len(), 18);
        let total: usize = out.style_counts.iter().map(|(_, t)| t).sum();
        assert_eq!(total, 18);
        assert_eq!(out.style_counts[0].1, 9);
        assert_eq!(out.style_counts[1].1, 9);
        let after: Vec<u64> = net
            .params()
            .iter()
            .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
            .collect();
        assert_eq!(before, after, "evaluation must not mutate parameters");
    }

    #[test]
    fn balanced_eval_overall_is_exact_style_mean() {
        let ds = gen_synthetic(8, 2, 2, 40).unwrap();
        let mut rng = Rng::new(2).derive("init");
        let mut net = build_baseline(&small_backbone(32), 2, &mut rng).unwrap();
        let indices: Vec<usize> = (0..ds.images.len()).collect();
        let out = evaluate(
            &mut net,
            SelectorMode::Oracle,
            None,
            &ds,
            &indices,
            36,
            32,
            EvalTarget::Class,
        )
        .unwrap();
        let mean = (out.style_counts[0].0 as f64 / out.style_counts[0].1 as f64
            + out.style_counts[1].0 as f64 / out.style_counts[1].1 as f64)
            / 2.0;
        assert_eq!(out.overall_acc.to_bits(), mean.to_bits());
    }

    #[test]
    fn oracle_and_single_branch_routing_produce_style_vectors() {
        let spec = SwiDeNSpec::new(2, 2, small_backbone(32), 3);
        let mut rng = Rng::new(3).derive("init");
        let net = build_swiden(&spec, &mut rng).unwrap();
        let x = Tensor::zeros(&[4, 3, 32, 32]);
        let styles = routing_styles(&net, SelectorMode::Oracle, None, &x, &[1, 0, 1, 0]).unwrap();
        assert_eq!(styles, vec![1, 0, 1, 0]);

        let single = SwiDeNSpec::new(2, 1, small_backbone(32), 3);
        let mut rng1 = Rng::new(3).derive("init");
        let net1 = build_swiden(&single, &mut rng1).unwrap();
        let styles1 = routing_styles(&net1, SelectorMode::Oracle, None, &x, &[1, 0, 1, 0]).unwrap();
        assert_eq!(styles1, vec![0, 0, 0, 0], "one branch takes every sample");
    }

    #[test]
    fn predicted_routing_without_switch_is_a_config_error() {
        let spec = SwiDeNSpec::new(1, 2, small_backbone(32), 3);
        let mut rng = Rng::new(4).derive("init");
        let net = build_swiden(&spec, &mut rng).unwrap();
        let x = Tensor::zeros(&[2, 3, 32, 32]);
        assert!(matches!(
            routing_styles(&net, SelectorMode::Predicted, None, &x, &[0, 1]),
            Err(Error::InvalidConfig(_))
        ));
    }
}
