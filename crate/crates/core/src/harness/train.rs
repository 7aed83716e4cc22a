//! The training loop shared by every architecture.
//!
//! Per epoch: shuffle the training indices, assemble augmented batches, run
//! forward/backward, and apply SGD; then measure validation accuracy on
//! single center crops, feed the plateau scheduler (when enabled), and save
//! a checkpoint whenever validation improves. After the last epoch the
//! best-validation checkpoint is reloaded and evaluated on the test split
//! with five-crop pooling.
//!
//! All randomness flows through streams derived from the run seed by
//! purpose (`init`, `shuffle`, `augment`, `dropout`), so the stream contents
//! do not depend on which architecture consumes them.

use std::path::Path;

use crate::data::{center_crop_bbox, rescale_smallest_side, Dataset, LabeledImage, Split, SplitSpec};
use crate::data::{augment_train, center_crop_bbox_jittered, make_splits};
use crate::error::{Error, Result};
use crate::harness::config::{ArchChoice, RunConfig, SchedulerChoice};
use crate::harness::eval::{argmax_rows, evaluate, routing_styles, stack_crops, EvalTarget};
use crate::harness::metrics::{render_metrics, render_predictions_csv, Metrics, PredRow};
use crate::models::{build_baseline, build_grn, build_swiden, build_switch_net};
use crate::models::{checkpoint_load, checkpoint_save};
use crate::models::{GrnSpec, MiniVggSpec, SelectorMode, SwiDeNSpec, SwitchNetSpec};
use crate::models::Network;
use crate::optim::{sgd_step, PlateauScheduler, SgdConfig};
use crate::rng::Rng;

pub const CHECKPOINT_FILE: &str = "checkpoint.swck";
pub const METRICS_FILE: &str = "metrics.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Metrics,
    pub rows: Vec<PredRow>,
}

/// Builds the network named by the config, plus the pre-trained Switch when
/// predicted routing is requested. Initialization draws from the `init`
/// stream for every architecture; the Switch uses its own stream so loading
/// it never perturbs the main network's draws.
pub fn build_run_network(
    cfg: &RunConfig,
    num_classes: usize,
    num_styles: usize,
) -> Result<(Network, Option<Network>)> {
    let master = Rng::new(cfg.seed);
    let mut init_rng = master.derive("init");
    let backbone = MiniVggSpec {
        input_hw: (cfg.crop, cfg.crop),
        dropout_p: cfg.dropout,
        ..MiniVggSpec::default()
    };
    let net = match cfg.arch {
        ArchChoice::Baseline => build_baseline(&backbone, num_classes, &mut init_rng)?,
        ArchChoice::Grn => {
            let spec = GrnSpec::new(cfg.lambda, backbone, num_classes, num_styles);
            build_grn(&spec, &mut init_rng)?
        }
        ArchChoice::Swiden => {
            let mut spec = SwiDeNSpec::new(cfg.k, num_styles, backbone, num_classes);
            spec.selector_mode = cfg.selector;
            spec.switch_checkpoint = cfg.switch_checkpoint.clone();
            spec.art_lr_scale = cfg.art_lr_scale;
            build_swiden(&spec, &mut init_rng)?
        }
        ArchChoice::Switch => {
            let spec = SwitchNetSpec {
                num_styles,
                ..SwitchNetSpec::default()
            };
            build_switch_net(&spec, &mut init_rng)?
        }
    };
    let switch = match (cfg.arch, cfg.selector) {
        (ArchChoice::Swiden, SelectorMode::Predicted) => {
            let path = cfg.switch_checkpoint.as_ref().ok_or_else(|| {
                Error::InvalidConfig("selector=predicted requires switch_checkpoint".into())
            })?;
            let spec = SwitchNetSpec {
                num_styles,
                ..SwitchNetSpec::default()
            };
            let mut sw = build_switch_net(&spec, &mut master.derive("switch-init"))?;
            checkpoint_load(&mut sw, path)?;
            Some(sw)
        }
        _ => None,
    };
    Ok((net, switch))
}

/// The (class, style, pixels) triple the loop feeds the network; pixels are
/// already rescaled and bbox-center-cropped.
struct TrainSample {
    /// Bbox-centered crop, used for validation scoring.
    crop: LabeledImage,
    /// Rescaled uncropped image; training crops are drawn around the bbox
    /// with a small window jitter so the net tolerates the shifted views
    /// the five-crop test protocol asks about.
    rescaled: LabeledImage,
    target: usize,
    style: usize,
}

fn prepare_samples(
    ds: &Dataset,
    indices: &[usize],
    cfg: &RunConfig,
    target: EvalTarget,
) -> Result<Vec<TrainSample>> {
    indices
        .iter()
        .map(|&idx| {
            let img = &ds.images[idx];
            let rescaled = rescale_smallest_side(img, cfg.rescale)?;
            let pixels = center_crop_bbox(&rescaled, cfg.crop)?;
            Ok(TrainSample {
                crop: LabeledImage {
                    pixels,
                    class_id: img.class_id,
                    style_id: img.style_id,
                    bbox: None,
                },
                rescaled,
                target: match target {
                    EvalTarget::Class => img.class_id,
                    EvalTarget::Style => img.style_id,
                },
                style: img.style_id,
            })
        })
        .collect()
}

/// Validation accuracy on single bounding-box-centered crops. One crop per
/// image keeps per-epoch scoring cheap; the full five-crop protocol is
/// reserved for the test split.
fn accuracy_on_samples(
    net: &mut Network,
    selector: SelectorMode,
    switch: &mut Option<&mut Network>,
    samples: &[TrainSample],
    batch: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in samples.chunks(batch) {
        let crops: Vec<_> = chunk.iter().map(|s| s.crop.pixels.clone()).collect();
        let x = stack_crops(&crops);
        let true_styles: Vec<usize> = chunk.iter().map(|s| s.style).collect();
        let styles = routing_styles(net, selector, switch.as_deref_mut(), &x, &true_styles)?;
        let probs = net.predict_probs(x, &styles)?;
        for (pred, s) in argmax_rows(&probs).iter().zip(chunk) {
            if *pred == s.target {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Ceiling on the reversed style gradient relative to the label gradient.
/// Training a fresh network diverges once the adversarial push passes
/// roughly a quarter of the label signal (cross-entropy ascent has no
/// ceiling of its own and there is no weight decay to pull back), so the
/// trainer holds it well under that; the reversal layer's own coefficient
/// is untouched.
pub const ADVERSARIAL_CEILING: f64 = 0.05;

/// Adversarial warm-up factor for style-head networks: `2/(1+e^(-10p)) - 1`
/// over training progress `p`, the standard schedule from the gradient
/// reversal literature. The reversed gradient is faded in so the label
/// pathway forms before the adversary starts erasing style information;
/// training a fresh network under the full reversal diverges within an
/// epoch. The style classifier itself always trains at full strength.
pub fn adversarial_warmup(epoch: usize, epochs: usize) -> f64 {
    let p = if epochs <= 1 {
        1.0
    } else {
        epoch as f64 / (epochs - 1) as f64
    };
    2.0 / (1.0 + (-10.0 * p).exp()) - 1.0
}

/// Trains `net` on the split and returns curves plus the five-crop test
/// evaluation of the best-validation checkpoint (written to
/// `<out>/checkpoint.swck`).
pub fn train_loop(
    net: &mut Network,
    mut switch: Option<&mut Network>,
    cfg: &RunConfig,
    ds: &Dataset,
    split: &Split,
) -> Result<TrainOutcome> {
    let out_dir = cfg.require_out()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    if split.val.is_empty() {
        return Err(Error::InvalidConfig(
            "split leaves no validation images; lower train_per_cell or test_per_cell".into(),
        ));
    }
    let target = match cfg.arch {
        ArchChoice::Switch => EvalTarget::Style,
        _ => EvalTarget::Class,
    };
    if target == EvalTarget::Style && ds.num_styles < 2 {
        return Err(Error::Data("dataset has no style labels to train the Switch on".into()));
    }

    let train = prepare_samples(ds, &split.train, cfg, target)?;
    let val = prepare_samples(ds, &split.val, cfg, target)?;

    let master = Rng::new(cfg.seed);
    let mut shuffle_rng = master.derive("shuffle");
    let mut aug_rng = master.derive("augment");
    let mut drop_rng = master.derive("dropout");

    let sgd = SgdConfig::new(cfg.lr, cfg.momentum)?;
    let mut plateau = match cfg.scheduler_resolved() {
        SchedulerChoice::Plateau => Some(PlateauScheduler::new(cfg.lr)),
        SchedulerChoice::Off => None,
    };
    let mut current_lr = cfg.lr;

    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut lr_curve = Vec::with_capacity(cfg.epochs);
    let mut val_acc_curve = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;

    // Covers the corner-to-center shift range of the five-crop protocol.
    let crop_jitter = (cfg.rescale - cfg.crop) / 2;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        if net.style_head.is_some() {
            net.style_grad_scale = ADVERSARIAL_CEILING * adversarial_warmup(epoch, cfg.epochs);
        }
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut crops = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            let mut true_styles = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &train[i];
                let window = LabeledImage {
                    pixels: center_crop_bbox_jittered(
                        &s.rescaled,
                        cfg.crop,
                        crop_jitter,
                        &mut aug_rng,
                    )?,
                    class_id: s.crop.class_id,
                    style_id: s.crop.style_id,
                    bbox: None,
                };
                crops.push(augment_train(&window, &mut aug_rng, true, true).pixels);
                targets.push(s.target);
                true_styles.push(s.style);
            }
            let x = stack_crops(&crops);
            let styles = routing_styles(net, cfg.selector, switch.as_deref_mut(), &x, &true_styles)?;
            // Networks with a style head (GRN) take the true style labels as
            // domain targets; routed networks take the branch assignment.
            let style_arg = if net.router.is_some() { styles } else { true_styles };
            let stats = net.train_step(x, &targets, &style_arg, &mut drop_rng)?;
            loss_sum += stats.loss * chunk.len() as f64;
            sgd_step(&mut net.params_mut(), sgd, current_lr);
        }
        loss_curve.push(loss_sum / train.len() as f64);
        lr_curve.push(current_lr);

        let val_acc = accuracy_on_samples(net, cfg.selector, &mut switch, &val, cfg.batch)?;
        val_acc_curve.push(val_acc);
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            checkpoint_save(net, &ckpt_path)?;
        }
        if let Some(sch) = plateau.as_mut() {
            current_lr = sch.update(val_acc)?;
        }
    }

    checkpoint_load(net, &ckpt_path)?;
    let test_eval = evaluate(
        net,
        cfg.selector,
        switch.as_deref_mut(),
        ds,
        &split.test,
        cfg.rescale,
        cfg.crop,
        target,
    )?;

    let metrics = Metrics {
        arch_label: cfg.arch_label(),
        spec_string: net.spec_string.clone(),
        seed: cfg.seed,
        overall_acc: test_eval.overall_acc,
        style_counts: test_eval.style_counts,
        class_counts: test_eval.class_counts,
        loss_curve,
        lr_curve,
        val_acc_curve,
        best_val_acc: best_val,
        best_epoch,
    };
    Ok(TrainOutcome {
        metrics,
        rows: test_eval.rows,
    })
}

fn unix_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{}", secs)
}

/// Writes `metrics.txt` and `predictions.csv` for a finished run.
pub fn write_run_artifacts(outcome: &TrainOutcome, ds: &Dataset, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let style_names: Vec<&str> = crate::data::STYLE_NAMES.to_vec();
    let metrics_text = render_metrics(
        &outcome.metrics,
        &style_names,
        &ds.class_names,
        &unix_timestamp(),
    );
    let metrics_path = out_dir.join(METRICS_FILE);
    std::fs::write(&metrics_path, metrics_text).map_err(|e| Error::io(&metrics_path, e))?;
    let csv_path = out_dir.join(PREDICTIONS_FILE);
    std::fs::write(&csv_path, render_predictions_csv(&outcome.rows))
        .map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

/// Splits the dataset, builds the network, trains, and writes the artifacts
/// (checkpoint, metrics file, prediction log) into the output directory.
pub fn run_training(cfg: &RunConfig, ds: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = SplitSpec {
        train_per_cell: cfg.train_per_cell,
        test_per_cell: cfg.test_per_cell,
        seed: cfg.split_seed(),
    };
    let splits = make_splits(ds, &spec, cfg.split_index + 1)?;
    let split = &splits[cfg.split_index];
    let (mut net, mut switch) = build_run_network(cfg, ds.num_classes(), ds.num_styles)?;
    let outcome = train_loop(&mut net, switch.as_mut(), cfg, ds, split)?;
    write_run_artifacts(&outcome, ds, cfg.require_out()?)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::gen_synthetic;

    fn tiny_cfg(arch: ArchChoice, out: &Path) -> RunConfig {
        RunConfig {
            arch,
            epochs: 2,
            batch: 4,
            seed: 7,
            rescale: 36,
            crop: 32,
            train_per_cell: 3,
            test_per_cell: 2,
            out: Some(out.to_path_buf()),
            ..RunConfig::default()
        }
    }

    #[test]
    fn baseline_training_produces_curves_checkpoint_and_artifacts() {
        let ds = gen_synthetic(3, 2, 6, 36).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(ArchChoice::Baseline, dir.path());
        let outcome = run_training(&cfg, &ds).unwrap();
        assert_eq!(outcome.metrics.loss_curve.len(), 2);
        assert_eq!(outcome.metrics.lr_curve, vec![0.01, 0.01]);
        assert_eq!(outcome.metrics.val_acc_curve.len(), 2);
        assert_eq!(outcome.rows.len(), 2 * 2 * 2);
        assert!(dir.path().join(CHECKPOINT_FILE).exists());
        assert!(dir.path().join(METRICS_FILE).exists());
        assert!(dir.path().join(PREDICTIONS_FILE).exists());
        assert!(outcome.metrics.loss_curve.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn identical_config_and_seed_reproduce_loss_curves_bitwise() {
        let ds = gen_synthetic(5, 2, 6, 36).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_training(&tiny_cfg(ArchChoice::Baseline, d1.path()), &ds).unwrap();
        let b = run_training(&tiny_cfg(ArchChoice::Baseline, d2.path()), &ds).unwrap();
        let bits = |c: &[f64]| c.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.metrics.loss_curve), bits(&b.metrics.loss_curve));
        assert_eq!(bits(&a.metrics.val_acc_curve), bits(&b.metrics.val_acc_curve));
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn grn_trains_with_constant_lr_and_different_seed_changes_losses() {
        let ds = gen_synthetic(9, 2, 6, 36).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(ArchChoice::Grn, dir.path());
        cfg.epochs = 3;
        let outcome = run_training(&cfg, &ds).unwrap();
        assert!(outcome.metrics.lr_curve.iter().all(|&lr| lr == cfg.lr));
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg2 = tiny_cfg(ArchChoice::Grn, dir2.path());
        cfg2.epochs = 3;
        cfg2.seed = 8;
        let other = run_training(&cfg2, &ds).unwrap();
        assert_ne!(
            outcome.metrics.loss_curve[0].to_bits(),
            other.metrics.loss_curve[0].to_bits()
        );
    }

    #[test]
    fn swiden_oracle_and_switch_architectures_train_end_to_end() {
        let ds = gen_synthetic(11, 2, 6, 36).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(ArchChoice::Swiden, dir.path());
        cfg.k = 2;
        let outcome = run_training(&cfg, &ds).unwrap();
        assert_eq!(outcome.metrics.loss_curve.len(), 2);

        let dir2 = tempfile::tempdir().unwrap();
        let sw_cfg = tiny_cfg(ArchChoice::Switch, dir2.path());
        let sw = run_training(&sw_cfg, &ds).unwrap();
        assert_eq!(sw.metrics.style_counts.len(), 2);
        // Switch rows predict styles, so every pred is a valid style id.
        assert!(sw.rows.iter().all(|r| r.pred_class < 2));
    }

    #[test]
    fn predicted_routing_uses_a_trained_switch_checkpoint() {
        let ds = gen_synthetic(13, 2, 6, 36).unwrap();
        let sw_dir = tempfile::tempdir().unwrap();
        let mut sw_cfg = tiny_cfg(ArchChoice::Switch, sw_dir.path());
        sw_cfg.epochs = 4;
        run_training(&sw_cfg, &ds).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(ArchChoice::Swiden, dir.path());
        cfg.k = 1;
        cfg.selector = SelectorMode::Predicted;
        cfg.switch_checkpoint = Some(sw_dir.path().join(CHECKPOINT_FILE));
        let outcome = run_training(&cfg, &ds).unwrap();
        assert_eq!(outcome.rows.len(), 8);
    }

    #[test]
    fn missing_validation_cell_is_a_config_error() {
        let ds = gen_synthetic(3, 2, 5, 36).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(ArchChoice::Baseline, dir.path());
        cfg.train_per_cell = 3;
        cfg.test_per_cell = 2;
        let err = run_training(&cfg, &ds).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "got {:?}", err);
    }
}
